#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "defgate/tensor.hpp"

namespace defgate {

// Fixed layer vocabulary. Spatial layers operate on C×H×W activations,
// dense/softmax on flat vectors.
struct Conv2d {
  int in_ch, out_ch, kernel, stride, pad;
};
struct TConv2d {
  int in_ch, out_ch, kernel, stride, pad, out_pad;
};
struct Dense {
  int in, out;
};
struct Relu {};
struct LeakyRelu {
  float alpha;
};
struct AvgPool {
  int kernel;
};
struct Flatten {};
struct Softmax {};

using LayerSpec = std::variant<Conv2d, TConv2d, Dense, Relu, LeakyRelu, AvgPool, Flatten, Softmax>;

std::string layer_name(const LayerSpec& layer);

// Output shape of `layer` applied to an input of shape `in`. Throws
// std::invalid_argument with a description when the shapes are incompatible.
std::vector<int> layer_output_shape(const LayerSpec& layer, const std::vector<int>& in);

// Parameter tensors of one layer; empty tensors for parameter-free layers.
struct LayerParams {
  Tensor w;
  Tensor b;
  std::int64_t count() const { return w.size() + b.size(); }
};

struct NetworkSpec {
  std::vector<int> input_shape;
  std::vector<LayerSpec> layers;

  // Validates layer-to-layer shape compatibility and that softmax, if
  // present, is the final layer. Returns the output shape.
  std::vector<int> validate() const;
  std::vector<int> output_shape() const { return validate(); }
  std::int64_t param_count() const;
};

// Parameter shapes for one layer (empty when the layer has none).
LayerParams make_layer_params(const LayerSpec& layer);

// A NetworkSpec plus its weights.
struct Network {
  NetworkSpec spec;
  std::vector<LayerParams> params;

  // Kaiming-uniform weights, zero biases, seeded.
  static Network init(NetworkSpec spec, std::uint64_t seed);

  std::int64_t param_count() const;
  std::vector<float> flat_weights() const;
  void set_flat_weights(std::span<const float> w);
};

}  // namespace defgate

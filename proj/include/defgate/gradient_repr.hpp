#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "defgate/data.hpp"
#include "defgate/net.hpp"

namespace defgate {

// The pre-trained network queries are differentiated through. One shared
// instance serves all sub-detectors.
struct TransformationModel {
  Network net;
  std::string provenance;  // what the net was trained on, e.g. "s2-discriminator"
};

// A per-sample min-max normalized input gradient: values lie in [0,255], and
// unless the raw gradient was constant the range is hit exactly. Constructed
// only by normalize_gradient.
struct GradientImage {
  Tensor tensor;
};

// Gradient of the sum of the model's output features with respect to the
// query image; same shape as the input.
Tensor to_gradient(const TransformationModel& mt, const Tensor& x);

// Affine per-sample map of the raw gradient onto [0,255], global over all
// channels. A constant gradient (max-min < 1e-12) maps to all zeros.
GradientImage normalize_gradient(const Tensor& raw);

struct LabeledGradient {
  GradientImage grad;
  int label = 0;
};

// to_gradient + normalize over a labeled set; labels and order carried
// through unchanged. Errors are rethrown with the sample index.
std::vector<LabeledGradient> transform_dataset(const TransformationModel& mt, std::span<const LabeledImage> images);

}  // namespace defgate

#include "defgate/net.hpp"

#include <cmath>
#include <stdexcept>

#include "defgate/rng.hpp"

namespace defgate {

namespace {

int conv_out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }
int tconv_out_dim(int in, int k, int s, int p, int op) { return (in - 1) * s - 2 * p + k + op; }

[[noreturn]] void shape_error(const LayerSpec& layer, const std::vector<int>& in, const std::string& why) {
  throw std::invalid_argument(layer_name(layer) + ": " + why + " (input shape " + shape_str(in) + ")");
}

}  // namespace

std::string layer_name(const LayerSpec& layer) {
  struct V {
    std::string operator()(const Conv2d& c) const {
      return "conv2d(" + std::to_string(c.in_ch) + "->" + std::to_string(c.out_ch) + ",k" + std::to_string(c.kernel) +
             ",s" + std::to_string(c.stride) + ",p" + std::to_string(c.pad) + ")";
    }
    std::string operator()(const TConv2d& c) const {
      return "transposed_conv2d(" + std::to_string(c.in_ch) + "->" + std::to_string(c.out_ch) + ",k" +
             std::to_string(c.kernel) + ",s" + std::to_string(c.stride) + ",p" + std::to_string(c.pad) + ",op" +
             std::to_string(c.out_pad) + ")";
    }
    std::string operator()(const Dense& d) const {
      return "dense(" + std::to_string(d.in) + "->" + std::to_string(d.out) + ")";
    }
    std::string operator()(const Relu&) const { return "relu"; }
    std::string operator()(const LeakyRelu& l) const { return "leaky_relu(" + std::to_string(l.alpha) + ")"; }
    std::string operator()(const AvgPool& p) const { return "avg_pool(" + std::to_string(p.kernel) + ")"; }
    std::string operator()(const Flatten&) const { return "flatten"; }
    std::string operator()(const Softmax&) const { return "softmax"; }
  };
  return std::visit(V{}, layer);
}

std::vector<int> layer_output_shape(const LayerSpec& layer, const std::vector<int>& in) {
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    if (in.size() != 3) shape_error(layer, in, "expects a C×H×W input");
    if (in[0] != c->in_ch) shape_error(layer, in, "input channels do not match");
    const int oh = conv_out_dim(in[1], c->kernel, c->stride, c->pad);
    const int ow = conv_out_dim(in[2], c->kernel, c->stride, c->pad);
    if (oh <= 0 || ow <= 0) shape_error(layer, in, "kernel larger than padded input");
    return {c->out_ch, oh, ow};
  }
  if (const auto* c = std::get_if<TConv2d>(&layer)) {
    if (in.size() != 3) shape_error(layer, in, "expects a C×H×W input");
    if (in[0] != c->in_ch) shape_error(layer, in, "input channels do not match");
    if (c->out_pad >= c->stride) shape_error(layer, in, "output padding must be smaller than stride");
    const int oh = tconv_out_dim(in[1], c->kernel, c->stride, c->pad, c->out_pad);
    const int ow = tconv_out_dim(in[2], c->kernel, c->stride, c->pad, c->out_pad);
    if (oh <= 0 || ow <= 0) shape_error(layer, in, "degenerate output size");
    return {c->out_ch, oh, ow};
  }
  if (const auto* d = std::get_if<Dense>(&layer)) {
    if (in.size() != 1) shape_error(layer, in, "expects a flat input, add flatten first");
    if (in[0] != d->in) shape_error(layer, in, "input width does not match");
    return {d->out};
  }
  if (std::holds_alternative<Relu>(layer) || std::holds_alternative<LeakyRelu>(layer)) {
    return in;
  }
  if (const auto* p = std::get_if<AvgPool>(&layer)) {
    if (in.size() != 3) shape_error(layer, in, "expects a C×H×W input");
    if (in[1] % p->kernel != 0 || in[2] % p->kernel != 0) shape_error(layer, in, "input not divisible by pool kernel");
    return {in[0], in[1] / p->kernel, in[2] / p->kernel};
  }
  if (std::holds_alternative<Flatten>(layer)) {
    return {static_cast<int>(shape_numel(in))};
  }
  if (std::holds_alternative<Softmax>(layer)) {
    if (in.size() != 1) shape_error(layer, in, "expects a flat input");
    return in;
  }
  throw std::logic_error("unhandled layer kind");
}

std::vector<int> NetworkSpec::validate() const {
  if (input_shape.empty()) throw std::invalid_argument("network input shape is empty");
  for (int d : input_shape) {
    if (d <= 0) throw std::invalid_argument("network input shape has non-positive dimension");
  }
  std::vector<int> cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<Softmax>(layers[i]) && i + 1 != layers.size()) {
      throw std::invalid_argument("softmax must be the final layer (found at layer " + std::to_string(i) + ")");
    }
    try {
      cur = layer_output_shape(layers[i], cur);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("layer " + std::to_string(i) + " " + e.what());
    }
  }
  return cur;
}

LayerParams make_layer_params(const LayerSpec& layer) {
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    return {Tensor::zeros({c->out_ch, c->in_ch, c->kernel, c->kernel}), Tensor::zeros({c->out_ch})};
  }
  if (const auto* c = std::get_if<TConv2d>(&layer)) {
    return {Tensor::zeros({c->in_ch, c->out_ch, c->kernel, c->kernel}), Tensor::zeros({c->out_ch})};
  }
  if (const auto* d = std::get_if<Dense>(&layer)) {
    return {Tensor::zeros({d->out, d->in}), Tensor::zeros({d->out})};
  }
  return {};
}

std::int64_t NetworkSpec::param_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += make_layer_params(l).count();
  return n;
}

Network Network::init(NetworkSpec spec, std::uint64_t seed) {
  spec.validate();
  Network net{std::move(spec), {}};
  Rng rng(seed);
  for (const auto& layer : net.spec.layers) {
    LayerParams p = make_layer_params(layer);
    if (p.w.size() > 0) {
      // Kaiming-uniform with fan_in = in_ch * k^2 (or dense input width).
      std::int64_t fan_in = 0;
      if (const auto* c = std::get_if<Conv2d>(&layer)) fan_in = static_cast<std::int64_t>(c->in_ch) * c->kernel * c->kernel;
      if (const auto* c = std::get_if<TConv2d>(&layer)) fan_in = static_cast<std::int64_t>(c->in_ch) * c->kernel * c->kernel;
      if (const auto* d = std::get_if<Dense>(&layer)) fan_in = d->in;
      const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
      for (auto& v : p.w.data) v = rng.uniform_f(-bound, bound);
    }
    net.params.push_back(std::move(p));
  }
  return net;
}

std::int64_t Network::param_count() const {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.count();
  return n;
}

std::vector<float> Network::flat_weights() const {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(param_count()));
  for (const auto& p : params) {
    out.insert(out.end(), p.w.data.begin(), p.w.data.end());
    out.insert(out.end(), p.b.data.begin(), p.b.data.end());
  }
  return out;
}

void Network::set_flat_weights(std::span<const float> w) {
  if (static_cast<std::int64_t>(w.size()) != param_count()) {
    throw std::invalid_argument("flat weight count " + std::to_string(w.size()) + " does not match network (" +
                                std::to_string(param_count()) + ")");
  }
  std::size_t off = 0;
  for (auto& p : params) {
    for (auto& v : p.w.data) v = w[off++];
    for (auto& v : p.b.data) v = w[off++];
  }
}

}  // namespace defgate

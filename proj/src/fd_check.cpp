#include "defgate/fd_check.hpp"

#include <stdexcept>

#include "defgate/detail/kernels.hpp"

namespace defgate {

namespace {

// Double-precision forward for a single (unbatched) input. Optionally records
// the sign (> 0) of every relu/leaky_relu pre-activation element.
double forward_sum_f64(const Network& net, const std::vector<double>& x, std::vector<std::uint8_t>* signs) {
  std::vector<int> cur = net.spec.input_shape;
  std::vector<double> a = x;
  if (signs) signs->clear();
  for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
    const auto& layer = net.spec.layers[li];
    const auto& p = net.params[li];
    const std::vector<int> nxt = layer_output_shape(layer, cur);
    std::vector<double> out(static_cast<std::size_t>(shape_numel(nxt)), 0.0);
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      detail::conv2d_fwd<double>(*c, a, cur[1], cur[2], p.w.data, p.b.data, out, nxt[1], nxt[2]);
    } else if (const auto* c = std::get_if<TConv2d>(&layer)) {
      detail::tconv2d_fwd<double>(*c, a, cur[1], cur[2], p.w.data, p.b.data, out, nxt[1], nxt[2]);
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      detail::dense_fwd<double>(*d, a, p.w.data, p.b.data, out);
    } else if (std::holds_alternative<Relu>(layer)) {
      if (signs)
        for (double v : a) signs->push_back(v > 0 ? 1 : 0);
      detail::relu_fwd<double>(a, out);
    } else if (const auto* l = std::get_if<LeakyRelu>(&layer)) {
      if (signs)
        for (double v : a) signs->push_back(v > 0 ? 1 : 0);
      detail::leaky_relu_fwd<double>(l->alpha, a, out);
    } else if (const auto* ap = std::get_if<AvgPool>(&layer)) {
      detail::avg_pool_fwd<double>(*ap, a, cur[0], cur[1], cur[2], out);
    } else if (std::holds_alternative<Flatten>(layer)) {
      out = a;
    } else if (std::holds_alternative<Softmax>(layer)) {
      detail::softmax_fwd<double>(a, out);
    } else {
      throw std::logic_error("unhandled layer kind in oracle forward");
    }
    a = std::move(out);
    cur = nxt;
  }
  double sum = 0;
  for (double v : a) sum += v;
  return sum;
}

FdCheck run_fd(const Network& net, const Tensor& x, double h, bool want_kinks) {
  if (!(h > 0)) throw std::invalid_argument("finite difference step must be positive");
  if (x.shape != net.spec.input_shape) {
    throw std::invalid_argument("oracle input shape " + shape_str(x.shape) + " does not match network input " +
                                shape_str(net.spec.input_shape));
  }
  std::vector<double> base(x.data.begin(), x.data.end());
  FdCheck res;
  res.grad = Tensor::zeros(x.shape);
  res.kink.assign(x.data.size(), 0);

  std::vector<double> pt = base;
  std::vector<std::uint8_t> s_plus, s_minus;
  for (std::size_t i = 0; i < base.size(); ++i) {
    pt[i] = base[i] + h;
    const double fp = forward_sum_f64(net, pt, want_kinks ? &s_plus : nullptr);
    pt[i] = base[i] - h;
    const double fm = forward_sum_f64(net, pt, want_kinks ? &s_minus : nullptr);
    pt[i] = base[i];
    res.grad.data[i] = static_cast<float>((fp - fm) / (2.0 * h));
    if (want_kinks && s_plus != s_minus) res.kink[i] = 1;
  }
  return res;
}

}  // namespace

Tensor finite_difference_oracle(const Network& net, const Tensor& x, double h) {
  return run_fd(net, x, h, /*want_kinks=*/false).grad;
}

FdCheck finite_difference_check(const Network& net, const Tensor& x, double h) {
  return run_fd(net, x, h, /*want_kinks=*/true);
}

}  // namespace defgate

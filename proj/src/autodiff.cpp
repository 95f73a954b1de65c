#include "defgate/autodiff.hpp"

#include <stdexcept>

#include "defgate/detail/kernels.hpp"

namespace defgate {

namespace {

// Splits a possibly-batched tensor shape into (batch, per-sample shape).
int batch_of(const Network& net, const Tensor& x) {
  const auto& in = net.spec.input_shape;
  if (x.shape == in) return 1;
  if (x.shape.size() == in.size() + 1 && std::equal(in.begin(), in.end(), x.shape.begin() + 1)) return x.shape[0];
  throw std::invalid_argument("input shape " + shape_str(x.shape) + " does not match network input " + shape_str(in) +
                              " (a leading batch dimension is allowed)");
}

std::vector<int> with_batch(int batch, const std::vector<int>& shape, bool batched) {
  if (!batched) return shape;
  std::vector<int> s;
  s.reserve(shape.size() + 1);
  s.push_back(batch);
  s.insert(s.end(), shape.begin(), shape.end());
  return s;
}

void layer_forward_sample(const LayerSpec& layer, const LayerParams& p, std::span<const float> in,
                          const std::vector<int>& in_shape, std::span<float> out, const std::vector<int>& out_shape) {
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    detail::conv2d_fwd<float>(*c, in, in_shape[1], in_shape[2], p.w.data, p.b.data, out, out_shape[1], out_shape[2]);
  } else if (const auto* c = std::get_if<TConv2d>(&layer)) {
    detail::tconv2d_fwd<float>(*c, in, in_shape[1], in_shape[2], p.w.data, p.b.data, out, out_shape[1], out_shape[2]);
  } else if (const auto* d = std::get_if<Dense>(&layer)) {
    detail::dense_fwd<float>(*d, in, p.w.data, p.b.data, out);
  } else if (std::holds_alternative<Relu>(layer)) {
    detail::relu_fwd<float>(in, out);
  } else if (const auto* l = std::get_if<LeakyRelu>(&layer)) {
    detail::leaky_relu_fwd<float>(l->alpha, in, out);
  } else if (const auto* a = std::get_if<AvgPool>(&layer)) {
    detail::avg_pool_fwd<float>(*a, in, in_shape[0], in_shape[1], in_shape[2], out);
  } else if (std::holds_alternative<Flatten>(layer)) {
    std::copy(in.begin(), in.end(), out.begin());
  } else if (std::holds_alternative<Softmax>(layer)) {
    detail::softmax_fwd<float>(in, out);
  } else {
    throw std::logic_error("unhandled layer kind in forward");
  }
}

// --- backward kernels (float only) ---

void conv2d_bwd(const Conv2d& c, std::span<const float> in, int H, int W, std::span<const float> w,
                std::span<const float> gout, int OH, int OW, std::span<float> gin, std::span<float> gw,
                std::span<float> gb) {
  using detail::first_from;
  using detail::last_until;
  const int s = c.stride, p = c.pad;
  for (int oc = 0; oc < c.out_ch; ++oc) {
    const float* gop = gout.data() + static_cast<std::size_t>(oc) * OH * OW;
    if (!gb.empty()) {
      float acc = 0;
      for (int i = 0; i < OH * OW; ++i) acc += gop[i];
      gb[oc] += acc;
    }
    for (int ic = 0; ic < c.in_ch; ++ic) {
      const float* inp = in.data() + static_cast<std::size_t>(ic) * H * W;
      float* ginp = gin.empty() ? nullptr : gin.data() + static_cast<std::size_t>(ic) * H * W;
      const std::size_t wbase = ((static_cast<std::size_t>(oc) * c.in_ch + ic) * c.kernel) * c.kernel;
      for (int ky = 0; ky < c.kernel; ++ky) {
        const int oy_lo = first_from(p - ky, s);
        const int oy_hi = last_until(H - 1 + p - ky, s, OH - 1);
        for (int kx = 0; kx < c.kernel; ++kx) {
          const float wv = w[wbase + static_cast<std::size_t>(ky) * c.kernel + kx];
          const int ox_lo = first_from(p - kx, s);
          const int ox_hi = last_until(W - 1 + p - kx, s, OW - 1);
          float gwacc = 0;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const float* grow = gop + static_cast<std::size_t>(oy) * OW;
            const float* irow = inp + static_cast<std::size_t>(oy * s - p + ky) * W - p + kx;
            if (ginp) {
              float* girow = ginp + static_cast<std::size_t>(oy * s - p + ky) * W - p + kx;
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                const float g = grow[ox];
                gwacc += g * irow[ox * s];
                girow[ox * s] += g * wv;
              }
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) gwacc += grow[ox] * irow[ox * s];
            }
          }
          if (!gw.empty()) gw[wbase + static_cast<std::size_t>(ky) * c.kernel + kx] += gwacc;
        }
      }
    }
  }
}

void tconv2d_bwd(const TConv2d& c, std::span<const float> in, int H, int W, std::span<const float> w,
                 std::span<const float> gout, int OH, int OW, std::span<float> gin, std::span<float> gw,
                 std::span<float> gb) {
  using detail::first_from;
  using detail::last_until;
  const int s = c.stride, p = c.pad;
  if (!gb.empty()) {
    for (int oc = 0; oc < c.out_ch; ++oc) {
      const float* gop = gout.data() + static_cast<std::size_t>(oc) * OH * OW;
      float acc = 0;
      for (int i = 0; i < OH * OW; ++i) acc += gop[i];
      gb[oc] += acc;
    }
  }
  for (int ic = 0; ic < c.in_ch; ++ic) {
    const float* inp = in.data() + static_cast<std::size_t>(ic) * H * W;
    float* ginp = gin.empty() ? nullptr : gin.data() + static_cast<std::size_t>(ic) * H * W;
    for (int oc = 0; oc < c.out_ch; ++oc) {
      const float* gop = gout.data() + static_cast<std::size_t>(oc) * OH * OW;
      const std::size_t wbase = ((static_cast<std::size_t>(ic) * c.out_ch + oc) * c.kernel) * c.kernel;
      for (int ky = 0; ky < c.kernel; ++ky) {
        const int cy = ky - p;  // oy = iy*s + cy
        const int iy_lo = first_from(-cy, s);
        const int iy_hi = last_until(OH - 1 - cy, s, H - 1);
        for (int kx = 0; kx < c.kernel; ++kx) {
          const float wv = w[wbase + static_cast<std::size_t>(ky) * c.kernel + kx];
          const int cx = kx - p;
          const int ix_lo = first_from(-cx, s);
          const int ix_hi = last_until(OW - 1 - cx, s, W - 1);
          float gwacc = 0;
          for (int iy = iy_lo; iy <= iy_hi; ++iy) {
            const float* grow = gop + static_cast<std::size_t>(iy * s + cy) * OW + cx;
            const float* irow = inp + static_cast<std::size_t>(iy) * W;
            if (ginp) {
              float* girow = ginp + static_cast<std::size_t>(iy) * W;
              for (int ix = ix_lo; ix <= ix_hi; ++ix) {
                const float g = grow[ix * s];
                gwacc += g * irow[ix];
                girow[ix] += g * wv;
              }
            } else {
              for (int ix = ix_lo; ix <= ix_hi; ++ix) gwacc += grow[ix * s] * irow[ix];
            }
          }
          if (!gw.empty()) gw[wbase + static_cast<std::size_t>(ky) * c.kernel + kx] += gwacc;
        }
      }
    }
  }
}

void dense_bwd(const Dense& d, std::span<const float> in, std::span<const float> w, std::span<const float> gout,
               std::span<float> gin, std::span<float> gw, std::span<float> gb) {
  for (int o = 0; o < d.out; ++o) {
    const float g = gout[o];
    const float* wrow = w.data() + static_cast<std::size_t>(o) * d.in;
    if (!gb.empty()) gb[o] += g;
    if (!gw.empty()) {
      float* gwrow = gw.data() + static_cast<std::size_t>(o) * d.in;
      for (int i = 0; i < d.in; ++i) gwrow[i] += g * in[i];
    }
    if (!gin.empty()) {
      for (int i = 0; i < d.in; ++i) gin[i] += g * wrow[i];
    }
  }
}

void layer_backward_sample(const LayerSpec& layer, const LayerParams& p, std::span<const float> in,
                           const std::vector<int>& in_shape, std::span<const float> out,
                           const std::vector<int>& out_shape, std::span<const float> gout, std::span<float> gin,
                           std::span<float> gw, std::span<float> gb) {
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    conv2d_bwd(*c, in, in_shape[1], in_shape[2], p.w.data, gout, out_shape[1], out_shape[2], gin, gw, gb);
  } else if (const auto* c = std::get_if<TConv2d>(&layer)) {
    tconv2d_bwd(*c, in, in_shape[1], in_shape[2], p.w.data, gout, out_shape[1], out_shape[2], gin, gw, gb);
  } else if (const auto* d = std::get_if<Dense>(&layer)) {
    dense_bwd(*d, in, p.w.data, gout, gin, gw, gb);
  } else if (std::holds_alternative<Relu>(layer)) {
    if (!gin.empty())
      for (std::size_t i = 0; i < in.size(); ++i) gin[i] += in[i] > 0 ? gout[i] : 0.0f;
  } else if (const auto* l = std::get_if<LeakyRelu>(&layer)) {
    if (!gin.empty())
      for (std::size_t i = 0; i < in.size(); ++i) gin[i] += in[i] > 0 ? gout[i] : l->alpha * gout[i];
  } else if (const auto* a = std::get_if<AvgPool>(&layer)) {
    if (!gin.empty()) {
      const int C = in_shape[0], H = in_shape[1], W = in_shape[2];
      const int OH = out_shape[1], OW = out_shape[2];
      const float inv = 1.0f / static_cast<float>(a->kernel * a->kernel);
      for (int c = 0; c < C; ++c) {
        const float* gop = gout.data() + static_cast<std::size_t>(c) * OH * OW;
        float* ginp = gin.data() + static_cast<std::size_t>(c) * H * W;
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox) {
            const float g = gop[static_cast<std::size_t>(oy) * OW + ox] * inv;
            for (int ky = 0; ky < a->kernel; ++ky) {
              float* row = ginp + static_cast<std::size_t>(oy * a->kernel + ky) * W + static_cast<std::size_t>(ox) * a->kernel;
              for (int kx = 0; kx < a->kernel; ++kx) row[kx] += g;
            }
          }
      }
    }
  } else if (std::holds_alternative<Flatten>(layer)) {
    if (!gin.empty())
      for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
  } else if (std::holds_alternative<Softmax>(layer)) {
    if (!gin.empty()) {
      float dot = 0;
      for (std::size_t i = 0; i < out.size(); ++i) dot += gout[i] * out[i];
      for (std::size_t i = 0; i < out.size(); ++i) gin[i] += out[i] * (gout[i] - dot);
    }
  } else {
    throw std::logic_error("unhandled layer kind in backward");
  }
}

}  // namespace

Trace forward_trace(const Network& net, const Tensor& x) {
  const int batch = batch_of(net, x);
  const bool batched = (x.shape.size() == net.spec.input_shape.size() + 1);
  check_finite(x, "forward input");

  Trace tr;
  tr.batch = batch;
  tr.acts.reserve(net.spec.layers.size() + 1);
  tr.acts.push_back(x);

  std::vector<int> cur = net.spec.input_shape;
  for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
    const auto& layer = net.spec.layers[li];
    std::vector<int> nxt;
    try {
      nxt = layer_output_shape(layer, cur);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("layer " + std::to_string(li) + " " + e.what());
    }
    const std::int64_t in_n = shape_numel(cur), out_n = shape_numel(nxt);
    Tensor out = Tensor::zeros(with_batch(batch, nxt, batched));
    const Tensor& in = tr.acts.back();
    for (int s = 0; s < batch; ++s) {
      layer_forward_sample(layer, net.params[li],
                           std::span<const float>(in.data.data() + s * in_n, static_cast<std::size_t>(in_n)), cur,
                           std::span<float>(out.data.data() + s * out_n, static_cast<std::size_t>(out_n)), nxt);
    }
    tr.acts.push_back(std::move(out));
    cur = std::move(nxt);
  }
  check_finite(tr.acts.back(), "forward output");
  return tr;
}

Tensor forward(const Network& net, const Tensor& x) { return forward_trace(net, x).acts.back(); }

Grads backward(const Network& net, const Trace& trace, const Tensor& grad_out, bool want_input, bool want_params) {
  if (trace.acts.size() != net.spec.layers.size() + 1) throw std::invalid_argument("trace does not match network");
  if (!same_shape(grad_out, trace.acts.back())) {
    throw std::invalid_argument("grad_out shape " + shape_str(grad_out.shape) + " does not match traced output " +
                                shape_str(trace.acts.back().shape));
  }
  const int batch = trace.batch;
  const bool batched = (trace.acts[0].shape.size() == net.spec.input_shape.size() + 1);

  // Per-layer sample shapes.
  std::vector<std::vector<int>> shapes;
  shapes.push_back(net.spec.input_shape);
  for (const auto& layer : net.spec.layers) shapes.push_back(layer_output_shape(layer, shapes.back()));

  Grads grads;
  if (want_params) {
    grads.params.reserve(net.params.size());
    for (const auto& layer : net.spec.layers) grads.params.push_back(make_layer_params(layer));
  }

  Tensor gcur = grad_out;
  for (int li = static_cast<int>(net.spec.layers.size()) - 1; li >= 0; --li) {
    const auto& layer = net.spec.layers[li];
    const auto& in_shape = shapes[li];
    const auto& out_shape = shapes[li + 1];
    const std::int64_t in_n = shape_numel(in_shape), out_n = shape_numel(out_shape);
    const bool need_gin = want_input || li > 0;
    Tensor gin = need_gin ? Tensor::zeros(with_batch(batch, in_shape, batched)) : Tensor();
    std::span<float> gw, gb;
    if (want_params && grads.params[li].count() > 0) {
      gw = std::span<float>(grads.params[li].w.data);
      gb = std::span<float>(grads.params[li].b.data);
    }
    const Tensor& in = trace.acts[li];
    const Tensor& out = trace.acts[li + 1];
    for (int s = 0; s < batch; ++s) {
      layer_backward_sample(layer, net.params[li],
                            std::span<const float>(in.data.data() + s * in_n, static_cast<std::size_t>(in_n)), in_shape,
                            std::span<const float>(out.data.data() + s * out_n, static_cast<std::size_t>(out_n)),
                            out_shape,
                            std::span<const float>(gcur.data.data() + s * out_n, static_cast<std::size_t>(out_n)),
                            need_gin ? std::span<float>(gin.data.data() + s * in_n, static_cast<std::size_t>(in_n))
                                     : std::span<float>(),
                            gw, gb);
    }
    gcur = std::move(gin);
  }
  if (want_input) {
    check_finite(gcur, "input gradient");
    grads.input = std::move(gcur);
  }
  if (want_params) {
    for (const auto& p : grads.params) {
      check_finite(p.w, "weight gradient");
      check_finite(p.b, "bias gradient");
    }
  }
  return grads;
}

Tensor input_gradient(const Network& net, const Tensor& x) {
  Trace tr = forward_trace(net, x);
  Tensor ones = Tensor::full(tr.acts.back().shape, 1.0f);
  Grads g = backward(net, tr, ones, /*want_input=*/true, /*want_params=*/false);
  return std::move(*g.input);
}

}  // namespace defgate

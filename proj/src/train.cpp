#include "defgate/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace defgate {

namespace {
constexpr float kBeta1 = 0.9f;
constexpr float kBeta2 = 0.999f;
constexpr float kEps = 1e-8f;

void adam_update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, float lr, float bc1, float bc2) {
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    m.data[i] = kBeta1 * m.data[i] + (1.0f - kBeta1) * g.data[i];
    v.data[i] = kBeta2 * v.data[i] + (1.0f - kBeta2) * g.data[i] * g.data[i];
    const float mh = m.data[i] / bc1;
    const float vh = v.data[i] / bc2;
    p.data[i] -= lr * mh / (std::sqrt(vh) + kEps);
  }
}
}  // namespace

Adam::Adam(const Network& net) {
  for (const auto& layer : net.spec.layers) {
    m_.push_back(make_layer_params(layer));
    v_.push_back(make_layer_params(layer));
  }
}

void Adam::step(Network& net, const std::vector<LayerParams>& grads, float lr) {
  ++t_;
  const float bc1 = 1.0f - std::pow(kBeta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(kBeta2, static_cast<float>(t_));
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    if (net.params[i].count() == 0) continue;
    adam_update(net.params[i].w, grads[i].w, m_[i].w, v_[i].w, lr, bc1, bc2);
    adam_update(net.params[i].b, grads[i].b, m_[i].b, v_[i].b, lr, bc1, bc2);
  }
}

Tensor augment_image(const Tensor& img, const TrainConfig& cfg, Rng& rng) {
  if (img.shape.size() != 3) return img;
  const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
  Tensor out = img;

  if (cfg.augment_crop) {
    const int pad = 2;
    const int oy = rng.uniform_int(2 * pad + 1) - pad;
    const int ox = rng.uniform_int(2 * pad + 1) - pad;
    Tensor shifted = Tensor::zeros(out.shape);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y) {
        const int sy = y + oy;
        if (sy < 0 || sy >= H) continue;
        for (int x = 0; x < W; ++x) {
          const int sx = x + ox;
          if (sx < 0 || sx >= W) continue;
          shifted.data[(static_cast<std::size_t>(c) * H + y) * W + x] =
              out.data[(static_cast<std::size_t>(c) * H + sy) * W + sx];
        }
      }
    out = std::move(shifted);
  }
  if (cfg.augment_flip && rng.bernoulli(0.5)) {
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y) {
        float* row = out.data.data() + (static_cast<std::size_t>(c) * H + y) * W;
        std::reverse(row, row + W);
      }
  }
  if (cfg.augment_blur && rng.bernoulli(0.1)) {
    Tensor blurred = Tensor::zeros(out.shape);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          float acc = 0;
          int n = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int sy = y + dy, sx = x + dx;
              if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
              acc += out.data[(static_cast<std::size_t>(c) * H + sy) * W + sx];
              ++n;
            }
          blurred.data[(static_cast<std::size_t>(c) * H + y) * W + x] = acc / static_cast<float>(n);
        }
    out = std::move(blurred);
  }
  if (cfg.augment_quantize && rng.bernoulli(0.1)) {
    const int bs = 4;
    for (int c = 0; c < C; ++c)
      for (int by = 0; by < H; by += bs)
        for (int bx = 0; bx < W; bx += bs) {
          float acc = 0;
          int n = 0;
          for (int y = by; y < std::min(by + bs, H); ++y)
            for (int x = bx; x < std::min(bx + bs, W); ++x) {
              acc += out.data[(static_cast<std::size_t>(c) * H + y) * W + x];
              ++n;
            }
          const float mean = acc / static_cast<float>(n);
          for (int y = by; y < std::min(by + bs, H); ++y)
            for (int x = bx; x < std::min(bx + bs, W); ++x)
              out.data[(static_cast<std::size_t>(c) * H + y) * W + x] = mean;
        }
  }
  return out;
}

namespace {

int class_count_of(const Network& net) {
  const auto out = net.spec.output_shape();
  if (out.size() != 1) throw std::invalid_argument("classifier output must be a flat vector");
  return out[0];
}

void require_softmax_tail(const Network& net) {
  if (net.spec.layers.empty() || !std::holds_alternative<Softmax>(net.spec.layers.back())) {
    throw std::invalid_argument("supervised training expects a network ending in softmax");
  }
}

// Forward through everything but the final softmax; returns mean CE and the
// logit-space gradient (softmax(p) - onehot(y)) / batch.
struct BatchLoss {
  double loss;
  Tensor grad_logits;
  Trace trace;
};

BatchLoss batch_ce(const Network& logits_net, const Tensor& batch, std::span<const int> labels) {
  BatchLoss r{0.0, Tensor(), forward_trace(logits_net, batch)};
  const Tensor& logits = r.trace.output();
  const int n = r.trace.batch;
  const int k = logits.shape.back();
  r.grad_logits = Tensor::zeros(logits.shape);
  for (int s = 0; s < n; ++s) {
    const float* z = logits.data.data() + static_cast<std::size_t>(s) * k;
    float* g = r.grad_logits.data.data() + static_cast<std::size_t>(s) * k;
    float mx = z[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, z[i]);
    float sum = 0;
    for (int i = 0; i < k; ++i) sum += std::exp(z[i] - mx);
    const float logsum = std::log(sum) + mx;
    r.loss += static_cast<double>(logsum - z[labels[s]]);
    const float invn = 1.0f / static_cast<float>(n);
    for (int i = 0; i < k; ++i) {
      const float p = std::exp(z[i] - logsum);
      g[i] = (p - (i == labels[s] ? 1.0f : 0.0f)) * invn;
    }
  }
  r.loss /= n;
  return r;
}

}  // namespace

TrainResult train_supervised(Network& net, std::span<const LabeledImage> dataset, const TrainConfig& cfg) {
  require_softmax_tail(net);
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(cfg.lr > 0)) throw std::invalid_argument("learning rate must be positive");
  const int k = class_count_of(net);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].label < 0 || dataset[i].label >= k) {
      throw std::invalid_argument("label " + std::to_string(dataset[i].label) + " out of range [0," +
                                  std::to_string(k) + ") at sample " + std::to_string(i));
    }
    if (dataset[i].image.shape != net.spec.input_shape) {
      throw std::invalid_argument("sample " + std::to_string(i) + " shape " + shape_str(dataset[i].image.shape) +
                                  " does not match network input");
    }
  }

  // Train on the logits; reattach softmax at the end.
  Network logits_net{net.spec, std::move(net.params)};
  logits_net.spec.layers.pop_back();

  Adam opt(logits_net);
  Rng rng(cfg.seed);
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  const std::int64_t sample_n = shape_numel(net.spec.input_shape);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<float>(epoch / cfg.lr_decay_period));
    // Fisher-Yates driven by the seeded stream.
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const int n = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
      std::vector<int> shape = {n};
      shape.insert(shape.end(), net.spec.input_shape.begin(), net.spec.input_shape.end());
      Tensor batch = Tensor::zeros(shape);
      std::vector<int> labels(n);
      for (int s = 0; s < n; ++s) {
        const auto& rec = dataset[order[start + s]];
        Tensor img = augment_image(rec.image, cfg, rng);
        std::copy(img.data.begin(), img.data.end(), batch.data.begin() + s * sample_n);
        labels[s] = rec.label;
      }
      BatchLoss bl = batch_ce(logits_net, batch, labels);
      Grads g = backward(logits_net, bl.trace, bl.grad_logits, /*want_input=*/false, /*want_params=*/true);
      opt.step(logits_net, g.params, lr);
      epoch_loss += bl.loss * n;
    }
    result.loss_history.push_back(static_cast<float>(epoch_loss / static_cast<double>(dataset.size())));
  }

  net.params = std::move(logits_net.params);
  net.params.push_back(make_layer_params(net.spec.layers.back()));
  for (const auto& p : net.params) {
    check_finite(p.w, "trained weights");
    check_finite(p.b, "trained biases");
  }
  return result;
}

EvalResult evaluate_classifier(const Network& net, std::span<const LabeledImage> dataset, int batch_size) {
  require_softmax_tail(net);
  if (dataset.empty()) throw std::invalid_argument("evaluation dataset is empty");
  Network logits_net{net.spec, net.params};
  logits_net.spec.layers.pop_back();
  logits_net.params.pop_back();

  const std::int64_t sample_n = shape_numel(net.spec.input_shape);
  EvalResult res;
  std::int64_t correct = 0;
  double loss = 0;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const int n = static_cast<int>(std::min<std::size_t>(batch_size, dataset.size() - start));
    std::vector<int> shape = {n};
    shape.insert(shape.end(), net.spec.input_shape.begin(), net.spec.input_shape.end());
    Tensor batch = Tensor::zeros(shape);
    std::vector<int> labels(n);
    for (int s = 0; s < n; ++s) {
      std::copy(dataset[start + s].image.data.begin(), dataset[start + s].image.data.end(),
                batch.data.begin() + s * sample_n);
      labels[s] = dataset[start + s].label;
    }
    BatchLoss bl = batch_ce(logits_net, batch, labels);
    loss += bl.loss * n;
    const Tensor& logits = bl.trace.output();
    const int k = logits.shape.back();
    for (int s = 0; s < n; ++s) {
      const float* z = logits.data.data() + static_cast<std::size_t>(s) * k;
      int arg = 0;
      for (int i = 1; i < k; ++i)
        if (z[i] > z[arg]) arg = i;
      if (arg == labels[s]) ++correct;
    }
  }
  res.loss = loss / static_cast<double>(dataset.size());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return res;
}

}  // namespace defgate

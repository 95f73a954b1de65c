#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "defgate/autodiff.hpp"
#include "defgate/data.hpp"
#include "defgate/net.hpp"
#include "defgate/rng.hpp"

namespace defgate {

struct TrainConfig {
  float lr = 5e-4f;
  float lr_decay = 0.9f;
  int lr_decay_period = 10;  // epochs between decays
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool augment_crop = false;      // random 32x32 crop from a 2px zero pad
  bool augment_flip = false;      // horizontal flip, p=0.5
  bool augment_blur = false;      // 3x3 box blur, p=0.1
  bool augment_quantize = false;  // 4x4 block averaging, p=0.1
};

// Adam with bias correction; β1=0.9, β2=0.999, ε=1e-8.
class Adam {
 public:
  explicit Adam(const Network& net);
  void step(Network& net, const std::vector<LayerParams>& grads, float lr);

 private:
  std::vector<LayerParams> m_, v_;
  int t_ = 0;
};

struct TrainResult {
  std::vector<float> loss_history;  // mean cross-entropy per epoch
};

// Supervised cross-entropy training. The network must end in softmax; the
// loss and its gradient are computed from the logits in fused form.
// Deterministic given (cfg.seed, dataset order).
TrainResult train_supervised(Network& net, std::span<const LabeledImage> dataset, const TrainConfig& cfg);

// Mean cross-entropy and argmax accuracy of a softmax network on a dataset.
struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};
EvalResult evaluate_classifier(const Network& net, std::span<const LabeledImage> dataset, int batch_size = 64);

// Single augmentation pass over one C×H×W image, drawing from `rng` in a
// fixed order. Exposed for tests.
Tensor augment_image(const Tensor& img, const TrainConfig& cfg, Rng& rng);

}  // namespace defgate

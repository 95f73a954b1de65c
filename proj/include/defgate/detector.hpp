#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "defgate/gradient_repr.hpp"
#include "defgate/train.hpp"

namespace defgate {

// Binary real(0)/fake(1) classifier over gradient images. The network sees
// inputs scaled by input_scale (1/255 for gradient images so first-layer
// activations stay O(1)).
struct SubDetector {
  Network net;  // 2 logits + softmax
  float tau = 0.5f;
  std::string tag;  // S1 | S2 | S3
  float input_scale = 1.0f / 255.0f;
  float heldout_accuracy = 0.0f;

  float fake_probability(const GradientImage& g) const;
  // Batched scoring along a leading batch dimension.
  std::vector<float> fake_probabilities(const Tensor& batch) const;
};

struct Verdict {
  std::vector<float> sub_probs;
  std::vector<bool> sub_flags;  // prob >= tau
  bool malicious = false;       // OR of the flags
};

struct EnsembleDetector {
  std::vector<SubDetector> subs;
  std::shared_ptr<const TransformationModel> mt;

  Verdict detect(const Tensor& image) const;
  std::vector<Verdict> detect_batch(const Tensor& images) const;
};

struct DetectionMetrics {
  double dacc_sample = 0;  // fraction of malicious samples flagged
  double fpr_sample = 0;   // fraction of benign samples flagged
  double dacc_batch = 0;   // batch-sequence protocol: flagged fraction > 0.5
  double fpr_batch = 0;
  int batch_size = 0;
};

// Cross-entropy training of one binary classifier on labeled inputs with a
// fixed input scale; trains on a deterministic 90/10 split and records the
// held-out accuracy. Rejects empty or single-class data and imbalance > 10%.
SubDetector train_binary_classifier(std::span<const LabeledImage> data, float input_scale, const TrainConfig& cfg,
                                    const std::string& tag, const NetworkSpec& arch);

// Standard entry: train on gradient images (input scale 1/255, default
// architecture).
SubDetector train_subdetector(std::span<const LabeledGradient> dg, const TrainConfig& cfg, const std::string& tag);

EnsembleDetector assemble(std::vector<SubDetector> subs, std::shared_ptr<const TransformationModel> mt);

// Per-sample and per-batch-sequence detection accuracy / false positive rate
// over a ground-truth labeled set (label 1 = malicious).
DetectionMetrics evaluate_detector(const EnsembleDetector& ens, std::span<const LabeledImage> set, int batch_size);

// Ensemble persistence: a JSON manifest referencing nn-core checkpoints.
void save_ensemble(const std::filesystem::path& manifest_path, const EnsembleDetector& ens);
EnsembleDetector load_ensemble(const std::filesystem::path& manifest_path);

}  // namespace defgate

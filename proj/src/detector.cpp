#include "defgate/detector.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "defgate/autodiff.hpp"
#include "defgate/checkpoint.hpp"
#include "defgate/rng.hpp"
#include "defgate/zoo.hpp"

namespace defgate {

using nlohmann::json;

namespace {

Tensor scaled(const Tensor& t, float scale) {
  Tensor out = t;
  if (scale != 1.0f)
    for (auto& v : out.data) v *= scale;
  return out;
}

}  // namespace

float SubDetector::fake_probability(const GradientImage& g) const {
  const Tensor probs = forward(net, scaled(g.tensor, input_scale));
  return probs.data[1];
}

std::vector<float> SubDetector::fake_probabilities(const Tensor& batch) const {
  const Tensor probs = forward(net, scaled(batch, input_scale));
  const int n = batch.shape.size() == net.spec.input_shape.size() ? 1 : batch.shape[0];
  std::vector<float> out(n);
  for (int s = 0; s < n; ++s) out[s] = probs.data[s * 2 + 1];
  return out;
}

SubDetector train_binary_classifier(std::span<const LabeledImage> data, float input_scale, const TrainConfig& cfg,
                                    const std::string& tag, const NetworkSpec& arch) {
  if (data.empty()) throw std::invalid_argument("detector training set is empty");
  std::int64_t fake = 0;
  for (const auto& rec : data) {
    if (rec.label != 0 && rec.label != 1) throw std::invalid_argument("detector labels must be 0 (real) or 1 (fake)");
    fake += rec.label;
  }
  const std::int64_t real = static_cast<std::int64_t>(data.size()) - fake;
  if (fake == 0 || real == 0) throw std::invalid_argument("detector training set must contain both classes");
  if (std::abs(fake - real) * 10 > static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("detector training set imbalance exceeds 10% (" + std::to_string(real) + " real vs " +
                                std::to_string(fake) + " fake)");
  }

  // Deterministic shuffled 90/10 split, then scale inputs once up front.
  Rng rng(cfg.seed ^ 0xD5A5ULL);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
  const std::size_t val_n = std::max<std::size_t>(1, data.size() / 10);

  Dataset train_set, val_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& rec = data[order[i]];
    LabeledImage item{scaled(rec.image, input_scale), rec.label};
    if (i < val_n) {
      val_set.push_back(std::move(item));
    } else {
      train_set.push_back(std::move(item));
    }
  }

  SubDetector sub;
  sub.tag = tag;
  sub.input_scale = input_scale;
  sub.net = Network::init(arch, cfg.seed);
  train_supervised(sub.net, train_set, cfg);
  sub.heldout_accuracy = static_cast<float>(evaluate_classifier(sub.net, val_set).accuracy);
  return sub;
}

SubDetector train_subdetector(std::span<const LabeledGradient> dg, const TrainConfig& cfg, const std::string& tag) {
  Dataset as_images;
  as_images.reserve(dg.size());
  for (const auto& rec : dg) as_images.push_back({rec.grad.tensor, rec.label});
  return train_binary_classifier(as_images, 1.0f / 255.0f, cfg, tag, subdetector_spec());
}

EnsembleDetector assemble(std::vector<SubDetector> subs, std::shared_ptr<const TransformationModel> mt) {
  if (subs.empty()) throw std::invalid_argument("ensemble needs at least one sub-detector");
  if (!mt) throw std::invalid_argument("ensemble needs a transformation model");
  const auto img_shape = mt->net.spec.input_shape;
  for (const auto& s : subs) {
    if (s.net.spec.input_shape != img_shape) {
      throw std::invalid_argument("sub-detector '" + s.tag + "' input shape " + shape_str(s.net.spec.input_shape) +
                                  " does not match transformation model input " + shape_str(img_shape));
    }
  }
  return EnsembleDetector{std::move(subs), std::move(mt)};
}

Verdict EnsembleDetector::detect(const Tensor& image) const {
  const GradientImage g = normalize_gradient(to_gradient(*mt, image));
  Verdict v;
  for (const auto& sub : subs) {
    const float p = sub.fake_probability(g);
    v.sub_probs.push_back(p);
    v.sub_flags.push_back(p >= sub.tau);
    v.malicious = v.malicious || p >= sub.tau;
  }
  return v;
}

std::vector<Verdict> EnsembleDetector::detect_batch(const Tensor& images) const {
  const auto& in_shape = mt->net.spec.input_shape;
  if (images.shape == in_shape) return {detect(images)};
  const int n = images.shape[0];
  const std::int64_t sample_n = shape_numel(in_shape);

  // One batched input-gradient pass, then per-sample normalization.
  Tensor grads = input_gradient(mt->net, images);
  Tensor norm = Tensor::zeros(images.shape);
  for (int s = 0; s < n; ++s) {
    Tensor one = Tensor::zeros(in_shape);
    std::copy(grads.data.begin() + s * sample_n, grads.data.begin() + (s + 1) * sample_n, one.data.begin());
    const GradientImage g = normalize_gradient(one);
    std::copy(g.tensor.data.begin(), g.tensor.data.end(), norm.data.begin() + s * sample_n);
  }

  std::vector<Verdict> out(n);
  for (const auto& sub : subs) {
    const std::vector<float> probs = sub.fake_probabilities(norm);
    for (int s = 0; s < n; ++s) {
      out[s].sub_probs.push_back(probs[s]);
      out[s].sub_flags.push_back(probs[s] >= sub.tau);
      out[s].malicious = out[s].malicious || probs[s] >= sub.tau;
    }
  }
  return out;
}

DetectionMetrics evaluate_detector(const EnsembleDetector& ens, std::span<const LabeledImage> set, int batch_size) {
  if (set.empty()) throw std::invalid_argument("evaluation set is empty");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");

  std::vector<bool> flagged(set.size());
  std::vector<int> truth(set.size());
  constexpr int kChunk = 64;
  for (std::size_t start = 0; start < set.size(); start += kChunk) {
    const int n = static_cast<int>(std::min<std::size_t>(kChunk, set.size() - start));
    std::vector<int> shape = {n};
    const auto& in_shape = ens.mt->net.spec.input_shape;
    shape.insert(shape.end(), in_shape.begin(), in_shape.end());
    Tensor batch = Tensor::zeros(shape);
    const std::int64_t sample_n = shape_numel(in_shape);
    for (int s = 0; s < n; ++s) {
      std::copy(set[start + s].image.data.begin(), set[start + s].image.data.end(),
                batch.data.begin() + s * sample_n);
      truth[start + s] = set[start + s].label;
    }
    const auto verdicts = ens.detect_batch(batch);
    for (int s = 0; s < n; ++s) flagged[start + s] = verdicts[s].malicious;
  }

  DetectionMetrics m;
  m.batch_size = batch_size;
  std::int64_t mal = 0, mal_hit = 0, ben = 0, ben_hit = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (truth[i] == 1) {
      ++mal;
      mal_hit += flagged[i];
    } else {
      ++ben;
      ben_hit += flagged[i];
    }
  }
  m.dacc_sample = mal ? static_cast<double>(mal_hit) / mal : 0.0;
  m.fpr_sample = ben ? static_cast<double>(ben_hit) / ben : 0.0;

  // Batch-sequence protocol: group same-class samples in dataset order into
  // runs of batch_size; a batch is called malicious when more than half of
  // its samples are flagged.
  auto batch_rate = [&](int klass) {
    std::int64_t batches = 0, hits = 0, in_batch = 0, flags = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (truth[i] != klass) continue;
      ++in_batch;
      flags += flagged[i];
      if (in_batch == batch_size) {
        ++batches;
        if (2 * flags > in_batch) ++hits;
        in_batch = flags = 0;
      }
    }
    if (in_batch > 0) {
      ++batches;
      if (2 * flags > in_batch) ++hits;
    }
    return batches ? static_cast<double>(hits) / static_cast<double>(batches) : 0.0;
  };
  m.dacc_batch = batch_rate(1);
  m.fpr_batch = batch_rate(0);
  return m;
}

void save_ensemble(const std::filesystem::path& manifest_path, const EnsembleDetector& ens) {
  const auto dir = manifest_path.parent_path();
  json manifest;
  manifest["transformation_model"] = {{"checkpoint", "mt.ckpt"}, {"provenance", ens.mt->provenance}};
  save_checkpoint_file(dir / "mt.ckpt", ens.mt->net, {0, 0, 0.0f, "transformation-model"});
  manifest["sub_detectors"] = json::array();
  for (std::size_t i = 0; i < ens.subs.size(); ++i) {
    const auto& s = ens.subs[i];
    const std::string file = "sub_" + s.tag + ".ckpt";
    save_checkpoint_file(dir / file, s.net, {0, 0, 0.0f, "sub-" + s.tag});
    manifest["sub_detectors"].push_back({{"checkpoint", file},
                                         {"tag", s.tag},
                                         {"tau", s.tau},
                                         {"input_scale", s.input_scale},
                                         {"heldout_accuracy", s.heldout_accuracy}});
  }
  std::ofstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot write ensemble manifest: " + manifest_path.string());
  f << manifest.dump(2) << '\n';
}

EnsembleDetector load_ensemble(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot open ensemble manifest: " + manifest_path.string());
  json manifest = json::parse(f);
  const auto dir = manifest_path.parent_path();

  auto mt = std::make_shared<TransformationModel>();
  mt->net = load_checkpoint_file(dir / manifest.at("transformation_model").at("checkpoint").get<std::string>()).net;
  mt->provenance = manifest.at("transformation_model").value("provenance", "");

  std::vector<SubDetector> subs;
  for (const auto& sj : manifest.at("sub_detectors")) {
    SubDetector s;
    s.net = load_checkpoint_file(dir / sj.at("checkpoint").get<std::string>()).net;
    s.tag = sj.at("tag").get<std::string>();
    s.tau = sj.value("tau", 0.5f);
    s.input_scale = sj.value("input_scale", 1.0f / 255.0f);
    s.heldout_accuracy = sj.value("heldout_accuracy", 0.0f);
    subs.push_back(std::move(s));
  }
  return assemble(std::move(subs), std::move(mt));
}

}  // namespace defgate

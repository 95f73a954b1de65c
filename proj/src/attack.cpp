#include "defgate/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "defgate/autodiff.hpp"
#include "defgate/corpus.hpp"
#include "defgate/rng.hpp"
#include "defgate/train.hpp"
#include "defgate/zoo.hpp"

namespace defgate {

VictimArtifacts train_victim(std::span<const LabeledImage> train, std::span<const LabeledImage> test,
                             std::uint64_t seed, double min_accuracy, int epochs) {
  if (train.empty() || test.empty()) throw std::invalid_argument("victim training needs train and test splits");
  VictimArtifacts out;
  out.net = Network::init(victim_spec(), seed);
  TrainConfig cfg;
  cfg.lr = 1e-3f;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.seed = seed;
  cfg.augment_crop = cfg.augment_flip = true;
  train_supervised(out.net, train, cfg);
  out.bacc = evaluate_classifier(out.net, test).accuracy;
  if (out.bacc < min_accuracy) {
    std::ostringstream msg;
    msg << "victim accuracy " << out.bacc << " is below the acceptable threshold " << min_accuracy;
    throw std::runtime_error(msg.str());
  }
  return out;
}

namespace {

// Mean KL(target || softmax(logits)) and its logit-space gradient
// (softmax - target) / n.
struct KlLoss {
  double loss = 0;
  Tensor grad;
};

KlLoss kl_to_targets(const Tensor& logits, std::span<const Prediction> targets) {
  const int n = static_cast<int>(targets.size());
  const int k = logits.shape.back();
  KlLoss out;
  out.grad = Tensor::zeros(logits.shape);
  for (int s = 0; s < n; ++s) {
    const float* z = logits.data.data() + static_cast<std::size_t>(s) * k;
    float mx = z[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, z[i]);
    float sum = 0;
    for (int i = 0; i < k; ++i) sum += std::exp(z[i] - mx);
    const float logsum = std::log(sum) + mx;
    for (int i = 0; i < k; ++i) {
      const double t = targets[s][i];
      const double logq = z[i] - logsum;
      if (t > 0) out.loss += t * (std::log(t) - logq);
      out.grad.data[static_cast<std::size_t>(s) * k + i] =
          static_cast<float>((std::exp(logq) - t) / static_cast<double>(n));
    }
  }
  out.loss /= n;
  return out;
}

Network strip_softmax(const Network& net) {
  Network logits{net.spec, net.params};
  if (!logits.spec.layers.empty() && std::holds_alternative<Softmax>(logits.spec.layers.back())) {
    logits.spec.layers.pop_back();
    logits.params.pop_back();
  }
  return logits;
}

}  // namespace

AttackResult run_attack(QueryEndpoint& endpoint, const AttackConfig& cfg) {
  if (cfg.budget < 1) throw std::invalid_argument("attack budget must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("attack batch size must be >= 1");

  Rng rng(cfg.seed);
  AttackResult res;
  res.generator = Network::init(generator_spec(), splitmix64(cfg.seed ^ 0xA77ACC));
  Network clone_logits = strip_softmax(Network::init(clone_spec(), splitmix64(cfg.seed ^ 0xC10E)));
  Adam opt_c(clone_logits);
  Adam opt_g(res.generator);

  const auto noise_shape = generator_noise_shape();
  const std::int64_t noise_n = shape_numel(noise_shape);
  const std::int64_t img_n = shape_numel(res.generator.spec.output_shape());
  AttackReport& rep = res.report;

  while (rep.queries_sent < cfg.budget && !rep.terminated_at) {
    const int n = static_cast<int>(std::min<std::int64_t>(cfg.batch_size, cfg.budget - rep.queries_sent));

    std::vector<int> zshape = {n};
    zshape.insert(zshape.end(), noise_shape.begin(), noise_shape.end());
    Tensor z = Tensor::zeros(zshape);
    for (auto& v : z.data) v = rng.normal_f();

    Trace gtrace = forward_trace(res.generator, z);
    Tensor images = gtrace.output();
    std::vector<std::uint8_t> in_range(images.data.size());
    for (std::size_t i = 0; i < images.data.size(); ++i) {
      in_range[i] = images.data[i] > 0.0f && images.data[i] < 1.0f;
      images.data[i] = std::clamp(images.data[i], 0.0f, 1.0f);
    }

    const QueryEndpoint::Reply reply = endpoint.query(images);
    const int answered = static_cast<int>(reply.probs.size());
    rep.queries_sent += n;
    rep.queries_answered += answered;
    if (reply.terminated) {
      rep.terminated_at = rep.queries_answered + 1;  // the first refused query
    }
    if (answered == 0) break;

    // Clone step(s) on the answered prefix: minimize KL(victim || clone).
    Tensor answered_imgs = images;
    if (answered < n) {
      std::vector<int> shape = images.shape;
      shape[0] = answered;
      answered_imgs = Tensor::zeros(shape);
      std::copy(images.data.begin(), images.data.begin() + answered * img_n, answered_imgs.data.begin());
    }
    for (int step = 0; step < cfg.clone_steps_per_batch; ++step) {
      Trace ct = forward_trace(clone_logits, answered_imgs);
      KlLoss kl = kl_to_targets(ct.output(), reply.probs);
      Grads g = backward(clone_logits, ct, kl.grad, false, true);
      opt_c.step(clone_logits, g.params, cfg.clone_lr);
      if (step == 0) rep.clone_loss.push_back(static_cast<float>(kl.loss));
    }

    // Generator step: ascend the clone's cross-entropy against the victim's
    // argmax labels, routed through the clone's input gradients only (the
    // victim stays a black box).
    if (cfg.generator_update == GeneratorUpdate::SurrogateGrad && answered == n) {
      Trace ct = forward_trace(clone_logits, answered_imgs);
      const Tensor& logits = ct.output();
      const int k = logits.shape.back();
      Tensor grad = Tensor::zeros(logits.shape);
      for (int s = 0; s < n; ++s) {
        const float* zrow = logits.data.data() + static_cast<std::size_t>(s) * k;
        int label = 0;
        for (int i = 1; i < k; ++i)
          if (reply.probs[s][i] > reply.probs[s][label]) label = i;
        float mx = zrow[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, zrow[i]);
        float sum = 0;
        for (int i = 0; i < k; ++i) sum += std::exp(zrow[i] - mx);
        for (int i = 0; i < k; ++i) {
          const float p = std::exp(zrow[i] - mx) / sum;
          // Negated CE gradient: gradient ascent on disagreement.
          grad.data[static_cast<std::size_t>(s) * k + i] =
              -(p - (i == label ? 1.0f : 0.0f)) / static_cast<float>(n);
        }
      }
      Grads gin = backward(clone_logits, ct, grad, true, false);
      Tensor gimg = std::move(*gin.input);
      for (std::size_t i = 0; i < gimg.data.size(); ++i)
        if (!in_range[i]) gimg.data[i] = 0.0f;
      Grads gg = backward(res.generator, gtrace, gimg, false, true);
      opt_g.step(res.generator, gg.params, cfg.generator_lr);
    }
  }

  // Reattach softmax so the clone is an ordinary probability classifier.
  res.clone = Network{clone_spec(), clone_logits.params};
  res.clone.params.push_back(make_layer_params(res.clone.spec.layers.back()));
  return res;
}

double evaluate_clone(const Network& clone, std::span<const LabeledImage> test) {
  if (test.empty()) throw std::invalid_argument("clone evaluation set is empty");
  return evaluate_classifier(clone, test).accuracy;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "mode,clone_cacc,queries_answered,terminated_at\n";
  for (const auto& r : rows) {
    os << r.mode << ',' << r.clone_cacc << ',' << r.queries_answered << ','
       << (r.terminated_at ? std::to_string(*r.terminated_at) : "") << '\n';
  }
  return os.str();
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "defense mode     clone CAcc   answered   terminated_at\n";
  for (const auto& r : rows) {
    const std::string term = r.terminated_at ? std::to_string(*r.terminated_at) : "-";
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-16s %10.4f %10lld   %s\n", r.mode.c_str(), r.clone_cacc,
                  static_cast<long long>(r.queries_answered), term.c_str());
    os << buf;
  }
  return os.str();
}

}  // namespace defgate

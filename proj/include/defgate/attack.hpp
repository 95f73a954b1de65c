#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defgate/data.hpp"
#include "defgate/net.hpp"
#include "defgate/perturb.hpp"

namespace defgate {

// Black-box prediction service the attacker talks to. Only soft labels come
// back; once the service terminates the user, every further query is refused.
class QueryEndpoint {
 public:
  virtual ~QueryEndpoint() = default;

  struct Reply {
    std::vector<Prediction> probs;  // answers for the leading prefix of the batch
    bool terminated = false;        // true once a query was refused
  };
  // One image per query; a refused query ends the reply at that point.
  virtual Reply query(const Tensor& batch) = 0;
};

enum class GeneratorUpdate { SurrogateGrad, RandomNoise };

struct AttackConfig {
  std::int64_t budget = 100000;  // every query sent counts, refused ones included
  int batch_size = 128;
  GeneratorUpdate generator_update = GeneratorUpdate::SurrogateGrad;
  std::uint64_t seed = 0;
  int clone_steps_per_batch = 1;
  float clone_lr = 1e-3f;
  float generator_lr = 2e-4f;
};

struct AttackReport {
  std::int64_t queries_sent = 0;
  std::int64_t queries_answered = 0;
  std::optional<std::int64_t> terminated_at;  // 1-based index of the first refused query
  double clone_cacc = -1.0;                   // filled by the caller via evaluate_clone
  double victim_bacc = -1.0;
  std::vector<float> clone_loss;              // mean KL per update step
};

struct AttackResult {
  AttackReport report;
  Network clone;
  Network generator;
};

struct VictimArtifacts {
  Network net;
  double bacc = 0;  // held-out benign accuracy
};

// Trains the victim on a labeled 4-class train split and gates it on held-out
// accuracy >= min_accuracy (fails loudly naming the threshold otherwise).
VictimArtifacts train_victim(std::span<const LabeledImage> train, std::span<const LabeledImage> test,
                             std::uint64_t seed, double min_accuracy, int epochs = 12);

// Data-free stealing loop: sample noise, synthesize queries, fit the clone to
// the endpoint's soft labels (KL), and optionally ascend the generator on
// clone-vs-victim-label disagreement through the clone's input gradients.
AttackResult run_attack(QueryEndpoint& endpoint, const AttackConfig& cfg);

// Fraction of argmax-correct predictions of `clone` on a labeled test set.
double evaluate_clone(const Network& clone, std::span<const LabeledImage> test);

struct AblationRow {
  std::string mode;  // no_defense | dpreds_only | detector_only | full
  double clone_cacc = 0;
  std::int64_t queries_answered = 0;
  std::optional<std::int64_t> terminated_at;
};

std::string ablation_csv(std::span<const AblationRow> rows);
std::string ablation_table(std::span<const AblationRow> rows);

}  // namespace defgate

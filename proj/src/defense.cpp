#include "defgate/defense.hpp"

#include <stdexcept>

#include "defgate/autodiff.hpp"

namespace defgate {

DefenseStack::DefenseStack(Network victim, std::shared_ptr<const EnsembleDetector> ensemble, PolicyConfig policy,
                           bool detector_on, bool dpreds_on, std::unique_ptr<LedgerStore> ledger)
    : victim_(std::move(victim)),
      ensemble_(std::move(ensemble)),
      policy_(policy),
      detector_on_(detector_on),
      dpreds_on_(dpreds_on),
      ledger_(ledger ? std::move(ledger) : std::make_unique<LedgerStore>()) {
  policy_.validate();
  victim_.spec.validate();
  if (detector_on_ && !ensemble_) throw std::invalid_argument("detector enabled but no ensemble provided");
}

Prediction DefenseStack::victim_prediction(const Tensor& image) const {
  const Tensor probs = forward(victim_, image);
  return Prediction(probs.data.begin(), probs.data.end());
}

DefenseStack::Response DefenseStack::query(const std::string& user, const Tensor& image) {
  // Terminated users are refused before any detector work.
  if (ledger_->admit(user) == Admit::Terminated) return {true, QueryOutcome::Kind::Terminated, {}};

  const Prediction p = victim_prediction(image);
  VerdictFlag flag;
  if (detector_on_) flag.malicious = ensemble_->detect(image).malicious;

  const QueryOutcome outcome = ledger_->process(user, flag, p, policy_, /*apply_perturbation=*/dpreds_on_);
  if (outcome.kind == QueryOutcome::Kind::Terminated) return {true, outcome.kind, {}};

  // With the detector off, perturbation (when enabled) applies to every
  // answer; there is nothing to discriminate on.
  if (dpreds_on_ && !detector_on_) {
    return {false, QueryOutcome::Kind::Deceptive, perturb(p, policy_.r)};
  }
  return {false, outcome.kind, outcome.p};
}

QueryEndpoint::Reply InProcessEndpoint::query(const Tensor& batch) {
  Reply reply;
  const auto& in_shape = stack_.victim().spec.input_shape;
  const bool batched = batch.shape.size() == in_shape.size() + 1;
  const int n = batched ? batch.shape[0] : 1;
  const std::int64_t sample_n = shape_numel(in_shape);
  for (int s = 0; s < n; ++s) {
    Tensor img = Tensor::zeros(in_shape);
    std::copy(batch.data.begin() + s * sample_n, batch.data.begin() + (s + 1) * sample_n, img.data.begin());
    const DefenseStack::Response r = stack_.query(user_, img);
    if (r.terminated) {
      reply.terminated = true;
      break;
    }
    reply.probs.push_back(r.probabilities);
  }
  return reply;
}

}  // namespace defgate

#pragma once

#include <memory>
#include <optional>
#include <string>

#include "defgate/attack.hpp"
#include "defgate/detector.hpp"
#include "defgate/policy.hpp"

namespace defgate {

// The full per-query pipeline behind the wire handler: admit -> victim
// forward -> (optional) detect -> record/respond. The victim and ensemble are
// immutable shared state; the ledger serializes its own updates.
class DefenseStack {
 public:
  DefenseStack(Network victim, std::shared_ptr<const EnsembleDetector> ensemble, PolicyConfig policy, bool detector_on,
               bool dpreds_on, std::unique_ptr<LedgerStore> ledger = nullptr);

  struct Response {
    bool terminated = false;
    QueryOutcome::Kind kind = QueryOutcome::Kind::Normal;
    Prediction probabilities;
  };
  Response query(const std::string& user, const Tensor& image);

  // The undefended victim outputs for the same image (f32 softmax widened to
  // double), used by tests and the no-defense wiring.
  Prediction victim_prediction(const Tensor& image) const;

  LedgerStore& ledger() { return *ledger_; }
  const Network& victim() const { return victim_; }
  const PolicyConfig& policy() const { return policy_; }
  bool detector_on() const { return detector_on_; }
  bool dpreds_on() const { return dpreds_on_; }

 private:
  Network victim_;
  std::shared_ptr<const EnsembleDetector> ensemble_;
  PolicyConfig policy_;
  bool detector_on_;
  bool dpreds_on_;
  std::unique_ptr<LedgerStore> ledger_;
};

// QueryEndpoint over an in-process DefenseStack under one user id.
class InProcessEndpoint : public QueryEndpoint {
 public:
  InProcessEndpoint(DefenseStack& stack, std::string user) : stack_(stack), user_(std::move(user)) {}
  Reply query(const Tensor& batch) override;

 private:
  DefenseStack& stack_;
  std::string user_;
};

}  // namespace defgate

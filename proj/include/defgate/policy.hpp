#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "defgate/perturb.hpp"

namespace defgate {

struct PolicyConfig {
  std::int64_t m0 = 5000;            // cumulative query-count threshold
  double k0 = 0.5;                   // malicious-fraction threshold, strict
  double r = 0.5;                    // perturbation value for deceptive responses
  double min_victim_accuracy = 0.90; // victim-quality gate used by the evaluation harness

  void validate() const;
};

struct UserLedger {
  std::string user;
  std::int64_t total_queries = 0;
  std::int64_t malicious_queries = 0;
  bool terminated = false;
  std::int64_t first_ts = 0;
  std::int64_t last_ts = 0;
};

enum class Admit { Proceed, Terminated };

struct QueryOutcome {
  enum class Kind { Normal, Deceptive, Terminated };
  Kind kind = Kind::Normal;
  Prediction p;  // empty for Terminated
};

// Minimal detector verdict view the policy needs; the detector module's
// Verdict converts into this.
struct VerdictFlag {
  bool malicious = false;
};

// Per-user counters with an optional append-only JSONL journal so restarts
// keep attacker state. All updates are serialized behind one mutex; snapshot
// may run concurrently with updates.
class LedgerStore {
 public:
  LedgerStore() = default;
  // Opens (and replays) the journal. Each state change appends one record
  // {user, total, malicious, terminated, ts}.
  explicit LedgerStore(const std::filesystem::path& journal_path);

  Admit admit(const std::string& user);

  // Counts the query, answers it (Normal, or Deceptive = perturb(p, cfg.r)
  // when the verdict is malicious and apply_perturbation is set), then
  // evaluates the termination rule: total >= M0 and malicious/total > K0
  // makes every subsequent query refused. Throws std::logic_error when called
  // for an already-terminated user.
  QueryOutcome record_and_respond(const std::string& user, const VerdictFlag& verdict, const Prediction& p,
                                  const PolicyConfig& cfg, bool apply_perturbation = true);

  // Same as record_and_respond but returns a Terminated outcome instead of
  // throwing when the user was terminated between admit and record (the
  // race-safe entry the gateway uses).
  QueryOutcome process(const std::string& user, const VerdictFlag& verdict, const Prediction& p,
                       const PolicyConfig& cfg, bool apply_perturbation = true);

  std::optional<UserLedger> lookup(const std::string& user) const;
  std::vector<UserLedger> snapshot() const;
  void flush();

 private:
  QueryOutcome process_locked(const std::string& user, const VerdictFlag& verdict, const Prediction& p,
                              const PolicyConfig& cfg, bool apply_perturbation);
  void append_journal(const UserLedger& u);

  mutable std::mutex mu_;
  std::unordered_map<std::string, UserLedger> users_;
  std::ofstream journal_;
};

}  // namespace defgate

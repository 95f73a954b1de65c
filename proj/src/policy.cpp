#include "defgate/policy.hpp"

#include <chrono>
#include <stdexcept>

#include <json.hpp>

namespace defgate {

using nlohmann::json;

namespace {
std::int64_t now_ts() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}
}  // namespace

void PolicyConfig::validate() const {
  if (m0 < 1) throw std::invalid_argument("M0 must be >= 1");
  if (!(k0 > 0.0 && k0 < 1.0)) throw std::invalid_argument("K0 must lie in (0,1)");
  if (!(r >= 0.0)) throw std::invalid_argument("perturbation value must be non-negative");
}

LedgerStore::LedgerStore(const std::filesystem::path& journal_path) {
  if (std::filesystem::exists(journal_path)) {
    std::ifstream in(journal_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded()) continue;  // tolerate a torn trailing write
      UserLedger u;
      u.user = j.value("user", "");
      u.total_queries = j.value("total", 0LL);
      u.malicious_queries = j.value("malicious", 0LL);
      u.terminated = j.value("terminated", false);
      u.last_ts = j.value("ts", 0LL);
      auto it = users_.find(u.user);
      if (it == users_.end()) {
        u.first_ts = u.last_ts;
        users_.emplace(u.user, std::move(u));
      } else {
        u.first_ts = it->second.first_ts;
        it->second = std::move(u);
      }
    }
  }
  journal_.open(journal_path, std::ios::app);
  if (!journal_) throw std::runtime_error("cannot open ledger journal: " + journal_path.string());
}

void LedgerStore::append_journal(const UserLedger& u) {
  if (!journal_.is_open()) return;
  json j = {{"user", u.user},
            {"total", u.total_queries},
            {"malicious", u.malicious_queries},
            {"terminated", u.terminated},
            {"ts", u.last_ts}};
  journal_ << j.dump() << '\n';
  journal_.flush();
}

Admit LedgerStore::admit(const std::string& user) {
  std::lock_guard lock(mu_);
  auto it = users_.find(user);
  if (it != users_.end() && it->second.terminated) return Admit::Terminated;
  return Admit::Proceed;
}

QueryOutcome LedgerStore::process_locked(const std::string& user, const VerdictFlag& verdict, const Prediction& p,
                                         const PolicyConfig& cfg, bool apply_perturbation) {
  auto [it, inserted] = users_.try_emplace(user);
  auto& u = it->second;
  if (inserted) u.user = user;
  if (u.terminated) return {QueryOutcome::Kind::Terminated, {}};

  const std::int64_t ts = now_ts();
  if (u.total_queries == 0) u.first_ts = ts;
  u.last_ts = ts;
  ++u.total_queries;

  QueryOutcome out;
  if (verdict.malicious) {
    ++u.malicious_queries;
    if (apply_perturbation) {
      out = {QueryOutcome::Kind::Deceptive, perturb(p, cfg.r)};
    } else {
      out = {QueryOutcome::Kind::Normal, p};
    }
  } else {
    out = {QueryOutcome::Kind::Normal, p};
  }

  // The triggering query is still answered; only subsequent ones are refused.
  if (u.total_queries >= cfg.m0 &&
      static_cast<double>(u.malicious_queries) > cfg.k0 * static_cast<double>(u.total_queries)) {
    u.terminated = true;
  }
  append_journal(u);
  return out;
}

QueryOutcome LedgerStore::process(const std::string& user, const VerdictFlag& verdict, const Prediction& p,
                                  const PolicyConfig& cfg, bool apply_perturbation) {
  cfg.validate();
  std::lock_guard lock(mu_);
  return process_locked(user, verdict, p, cfg, apply_perturbation);
}

QueryOutcome LedgerStore::record_and_respond(const std::string& user, const VerdictFlag& verdict, const Prediction& p,
                                             const PolicyConfig& cfg, bool apply_perturbation) {
  QueryOutcome out = process(user, verdict, p, cfg, apply_perturbation);
  if (out.kind == QueryOutcome::Kind::Terminated) {
    throw std::logic_error("record_and_respond called for terminated user '" + user + "'");
  }
  return out;
}

std::optional<UserLedger> LedgerStore::lookup(const std::string& user) const {
  std::lock_guard lock(mu_);
  auto it = users_.find(user);
  if (it == users_.end()) return std::nullopt;
  return it->second;
}

std::vector<UserLedger> LedgerStore::snapshot() const {
  std::lock_guard lock(mu_);
  std::vector<UserLedger> out;
  out.reserve(users_.size());
  for (const auto& [_, u] : users_) out.push_back(u);
  return out;
}

void LedgerStore::flush() {
  std::lock_guard lock(mu_);
  if (journal_.is_open()) journal_.flush();
}

}  // namespace defgate

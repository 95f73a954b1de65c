#include "defgate/gateway.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

#include "defgate/base64.hpp"
#include "defgate/checkpoint.hpp"

namespace defgate {

using nlohmann::json;

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open service config: " + path.string());
  json j = json::parse(f);
  ServiceConfig cfg;
  cfg.bind_address = j.value("bind_address", cfg.bind_address);
  cfg.port = j.value("port", cfg.port);
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) -> std::filesystem::path {
    if (p.empty()) return {};
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  cfg.victim_checkpoint = resolve(j.value("victim_checkpoint", ""));
  cfg.ensemble_manifest = resolve(j.value("ensemble_manifest", ""));
  cfg.api_keys = resolve(j.value("api_keys", ""));
  cfg.journal = resolve(j.value("journal", ""));
  if (j.contains("policy")) {
    const auto& p = j["policy"];
    cfg.policy.m0 = p.value("m0", cfg.policy.m0);
    cfg.policy.k0 = p.value("k0", cfg.policy.k0);
    cfg.policy.r = p.value("r", cfg.policy.r);
    cfg.policy.min_victim_accuracy = p.value("min_victim_accuracy", cfg.policy.min_victim_accuracy);
  }
  cfg.detector_on = j.value("detector_on", cfg.detector_on);
  cfg.dpreds_on = j.value("dpreds_on", cfg.dpreds_on);

  if (const char* env = std::getenv("DEFGATE_BIND")) {
    std::string bind = env;
    const auto colon = bind.rfind(':');
    if (colon != std::string::npos && colon + 1 < bind.size() &&
        bind.find_first_not_of("0123456789", colon + 1) == std::string::npos) {
      cfg.port = std::stoi(bind.substr(colon + 1));
      bind = bind.substr(0, colon);
    }
    if (!bind.empty()) cfg.bind_address = bind;
  }
  return cfg;
}

ApiKeyTable ApiKeyTable::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open api key table: " + path.string());
  ApiKeyTable table;
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream is(line);
    std::string key, user, role;
    if (!(is >> key >> user)) continue;
    Entry e{user, false};
    if (is >> role && role == "admin") e.admin = true;
    table.keys[key] = std::move(e);
  }
  return table;
}

const ApiKeyTable::Entry* ApiKeyTable::lookup(const std::string& key) const {
  auto it = keys.find(key);
  return it == keys.end() ? nullptr : &it->second;
}

struct Gateway::Impl {
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

}  // namespace

Gateway::Gateway(const ServiceConfig& cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  // Fail fast: every referenced artifact loads before serving begins.
  if (cfg_.victim_checkpoint.empty() || !std::filesystem::exists(cfg_.victim_checkpoint)) {
    throw std::runtime_error("victim checkpoint missing: " + cfg_.victim_checkpoint.string());
  }
  if (cfg_.api_keys.empty() || !std::filesystem::exists(cfg_.api_keys)) {
    throw std::runtime_error("api key table missing: " + cfg_.api_keys.string());
  }
  const LoadedCheckpoint victim = load_checkpoint_file(cfg_.victim_checkpoint);
  model_version_ = victim.meta.name.empty() ? "victim-seed" + std::to_string(victim.meta.seed) : victim.meta.name;
  keys_ = ApiKeyTable::load(cfg_.api_keys);

  std::shared_ptr<const EnsembleDetector> ensemble;
  if (cfg_.detector_on) {
    if (cfg_.ensemble_manifest.empty() || !std::filesystem::exists(cfg_.ensemble_manifest)) {
      throw std::runtime_error("ensemble manifest missing: " + cfg_.ensemble_manifest.string());
    }
    ensemble = std::make_shared<EnsembleDetector>(load_ensemble(cfg_.ensemble_manifest));
  }
  auto ledger = cfg_.journal.empty() ? std::make_unique<LedgerStore>() : std::make_unique<LedgerStore>(cfg_.journal);
  stack_ = std::make_unique<DefenseStack>(victim.net, std::move(ensemble), cfg_.policy, cfg_.detector_on,
                                          cfg_.dpreds_on, std::move(ledger));
  setup_routes();
}

Gateway::~Gateway() { stop(); }

void Gateway::setup_routes() {
  auto& svr = impl_->server;

  svr.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      return send_error(res, 400, "bad_request", "body must be a JSON object");
    }
    const std::string api_key = body.value("api_key", "");
    const ApiKeyTable::Entry* entry = keys_.lookup(api_key);
    if (!entry) return send_error(res, 401, "unknown_api_key", "api key not recognized");

    const auto& in_shape = stack_->victim().spec.input_shape;
    const std::vector<int> shape = body.value("shape", std::vector<int>{});
    if (shape != in_shape) {
      return send_error(res, 400, "bad_shape",
                        "shape must be " + shape_str(in_shape) + ", got " + shape_str(shape));
    }
    std::vector<std::uint8_t> bytes;
    try {
      bytes = base64_decode(body.value("image", ""));
    } catch (const std::invalid_argument& e) {
      return send_error(res, 400, "bad_image", e.what());
    }
    const std::size_t want = static_cast<std::size_t>(shape_numel(in_shape)) * 4;
    if (bytes.size() != want) {
      return send_error(res, 400, "bad_image",
                        "decoded image has " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(want));
    }
    Tensor image = Tensor::zeros(in_shape);
    std::memcpy(image.data.data(), bytes.data(), bytes.size());
    for (float v : image.data) {
      if (!std::isfinite(v)) return send_error(res, 400, "bad_image", "image contains non-finite values");
    }

    try {
      const DefenseStack::Response r = stack_->query(entry->user, image);
      if (r.terminated) return send_error(res, 403, "service_terminated", "service terminated for this user");
      send_json(res, 200, {{"probabilities", r.probabilities}, {"model_version", model_version_}});
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  svr.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"model_version", model_version_}});
  });

  auto require_admin = [this](const httplib::Request& req, httplib::Response& res) -> bool {
    const ApiKeyTable::Entry* entry = keys_.lookup(req.get_header_value("X-Api-Key"));
    if (!entry || !entry->admin) {
      send_error(res, 401, "admin_required", "admin api key required");
      return false;
    }
    return true;
  };

  auto ledger_json = [](const UserLedger& u) {
    return json{{"user", u.user},
                {"total", u.total_queries},
                {"malicious", u.malicious_queries},
                {"terminated", u.terminated},
                {"first_ts", u.first_ts},
                {"last_ts", u.last_ts}};
  };

  svr.Get("/v1/ledger", [this, require_admin, ledger_json](const httplib::Request& req, httplib::Response& res) {
    if (!require_admin(req, res)) return;
    json out = json::array();
    for (const auto& u : stack_->ledger().snapshot()) out.push_back(ledger_json(u));
    send_json(res, 200, {{"users", out}});
  });

  svr.Get(R"(/v1/ledger/([^/]+))", [this, require_admin, ledger_json](const httplib::Request& req,
                                                                      httplib::Response& res) {
    if (!require_admin(req, res)) return;
    const auto u = stack_->ledger().lookup(req.matches[1]);
    if (!u) return send_error(res, 404, "unknown_user", "no ledger entry for user");
    send_json(res, 200, ledger_json(*u));
  });
}

void Gateway::start() {
  auto& svr = impl_->server;
  if (cfg_.port == 0) {
    port_ = svr.bind_to_any_port(cfg_.bind_address);
    if (port_ <= 0) throw std::runtime_error("failed to bind " + cfg_.bind_address);
  } else {
    if (!svr.bind_to_port(cfg_.bind_address, cfg_.port)) {
      throw std::runtime_error("failed to bind " + cfg_.bind_address + ":" + std::to_string(cfg_.port));
    }
    port_ = cfg_.port;
  }
  serve_thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Gateway::run() {
  start();
  serve_thread_.join();
}

void Gateway::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (serve_thread_.joinable()) serve_thread_.join();
  if (stack_) stack_->ledger().flush();
}

}  // namespace defgate

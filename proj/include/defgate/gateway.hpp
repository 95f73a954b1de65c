#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <unordered_map>

#include "defgate/defense.hpp"

namespace defgate {

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::filesystem::path victim_checkpoint;
  std::filesystem::path ensemble_manifest;  // may be empty when detector_on is false
  std::filesystem::path api_keys;
  std::filesystem::path journal;            // empty disables persistence
  PolicyConfig policy;
  bool detector_on = true;
  bool dpreds_on = true;

  // Reads the JSON config file; DEFGATE_BIND ("host" or "host:port")
  // overrides the bind address.
  static ServiceConfig load(const std::filesystem::path& path);
};

struct ApiKeyTable {
  struct Entry {
    std::string user;
    bool admin = false;
  };
  std::unordered_map<std::string, Entry> keys;

  // Flat whitespace-separated file: "<key> <user-id> [admin]" per line;
  // '#' starts a comment.
  static ApiKeyTable load(const std::filesystem::path& path);
  const Entry* lookup(const std::string& key) const;
};

// HTTP shell around DefenseStack: POST /v1/predict, GET /v1/health,
// GET /v1/ledger[/{user}] (admin key). Referenced artifacts load in the
// constructor so a broken config fails before serving begins.
class Gateway {
 public:
  explicit Gateway(const ServiceConfig& cfg);
  ~Gateway();

  // Binds and serves on a background thread; returns once the port is open.
  void start();
  // Blocking variant for the CLI.
  void run();
  void stop();

  int port() const { return port_; }
  DefenseStack& stack() { return *stack_; }
  const std::string& model_version() const { return model_version_; }

 private:
  struct Impl;
  void setup_routes();

  ServiceConfig cfg_;
  ApiKeyTable keys_;
  std::unique_ptr<DefenseStack> stack_;
  std::string model_version_;
  std::unique_ptr<Impl> impl_;
  std::thread serve_thread_;
  int port_ = 0;
};

}  // namespace defgate

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "defgate/net.hpp"

namespace defgate {

// "MGNN" magic, little-endian u16 version, JSON header (spec + metadata),
// then the flat little-endian f32 weight block. Round trips are bit-exact.
struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  float final_loss = 0.0f;
  std::string name;  // free-form model tag, reported as model_version by the gateway
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, WeightCountMismatch, BadHeader };
  CheckpointError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> save_checkpoint(const Network& net, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Network net;
  CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint_file(const std::filesystem::path& path, const Network& net, const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint_file(const std::filesystem::path& path);

// NetworkSpec <-> JSON (used by checkpoints and the ensemble manifest).
std::string network_spec_to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const std::string& json);

}  // namespace defgate

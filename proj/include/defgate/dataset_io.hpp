#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "defgate/data.hpp"

namespace defgate {

// Dataset container: "DGDS" magic, u16 version, JSON manifest, little-endian
// i32 label block, then the packed little-endian f32 tensor block. The
// manifest records counts, shape, source tags, the generation seed and an
// FNV-1a digest over the data blocks, verified on load.
struct DatasetManifest {
  std::string name;
  int count = 0;
  std::vector<int> shape;
  std::vector<std::string> source_tags;
  std::uint64_t seed = 0;
  std::string digest;  // hex FNV-1a 64 over labels+data
};

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, DigestMismatch, BadHeader };
  DatasetError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xCBF29CE484222325ULL);

void save_dataset(const std::filesystem::path& path, const Dataset& set, const std::string& name,
                  std::span<const std::string> source_tags, std::uint64_t seed);

struct LoadedDataset {
  Dataset data;
  DatasetManifest manifest;
};
LoadedDataset load_dataset(const std::filesystem::path& path);

// Digest of an in-memory dataset (same bytes the container hashes).
std::string dataset_digest(const Dataset& set);

}  // namespace defgate

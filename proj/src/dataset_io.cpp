#include "defgate/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace defgate {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'G', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Serializes labels then image data to the exact byte layout stored on disk.
struct Blocks {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> data;
};

Blocks pack_blocks(const Dataset& set) {
  static_assert(std::endian::native == std::endian::little, "dataset blocks assume little-endian host");
  Blocks b;
  b.labels.resize(set.size() * 4);
  std::size_t floats = 0;
  for (const auto& rec : set) floats += rec.image.data.size();
  b.data.resize(floats * 4);
  std::size_t off = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::int32_t label = set[i].label;
    std::memcpy(b.labels.data() + i * 4, &label, 4);
    const auto& d = set[i].image.data;
    std::memcpy(b.data.data() + off, d.data(), d.size() * 4);
    off += d.size() * 4;
  }
  return b;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string dataset_digest(const Dataset& set) {
  const Blocks b = pack_blocks(set);
  return hex64(fnv1a64(b.data, fnv1a64(b.labels)));
}

void save_dataset(const std::filesystem::path& path, const Dataset& set, const std::string& name,
                  std::span<const std::string> source_tags, std::uint64_t seed) {
  std::vector<int> shape;
  for (const auto& rec : set) {
    if (shape.empty()) {
      shape = rec.image.shape;
    } else if (rec.image.shape != shape) {
      throw std::invalid_argument("dataset images must share one shape");
    }
  }
  const Blocks b = pack_blocks(set);

  json manifest;
  manifest["name"] = name;
  manifest["count"] = set.size();
  manifest["shape"] = shape;
  manifest["source_tags"] = std::vector<std::string>(source_tags.begin(), source_tags.end());
  manifest["seed"] = seed;
  manifest["digest"] = hex64(fnv1a64(b.data, fnv1a64(b.labels)));
  const std::string mtext = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open dataset file for writing: " + path.string());
  f.write(kMagic, 4);
  const std::uint16_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), 2);
  const std::uint32_t mlen = static_cast<std::uint32_t>(mtext.size());
  f.write(reinterpret_cast<const char*>(&mlen), 4);
  f.write(mtext.data(), mlen);
  f.write(reinterpret_cast<const char*>(b.labels.data()), static_cast<std::streamsize>(b.labels.size()));
  f.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(b.data.size()));
  if (!f) throw std::runtime_error("failed writing dataset file: " + path.string());
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open dataset file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  std::size_t off = 0;
  auto need = [&](std::size_t n, const char* where) {
    if (off + n > bytes.size())
      throw DatasetError(DatasetError::Kind::Truncated, std::string("dataset truncated in ") + where);
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw DatasetError(DatasetError::Kind::BadMagic, "bad dataset magic (want DGDS)");
  off = 4;
  need(2, "version");
  std::uint16_t ver;
  std::memcpy(&ver, bytes.data() + off, 2);
  off += 2;
  if (ver != kVersion)
    throw DatasetError(DatasetError::Kind::BadVersion, "unsupported dataset version " + std::to_string(ver));
  need(4, "manifest length");
  std::uint32_t mlen;
  std::memcpy(&mlen, bytes.data() + off, 4);
  off += 4;
  need(mlen, "manifest");
  const std::string mtext(reinterpret_cast<const char*>(bytes.data() + off), mlen);
  off += mlen;

  LoadedDataset out;
  json manifest = json::parse(mtext, nullptr, false);
  if (manifest.is_discarded()) throw DatasetError(DatasetError::Kind::BadHeader, "dataset manifest is not valid JSON");
  try {
    out.manifest.name = manifest.value("name", "");
    out.manifest.count = manifest.at("count").get<int>();
    out.manifest.shape = manifest.value("shape", std::vector<int>{});
    out.manifest.source_tags = manifest.value("source_tags", std::vector<std::string>{});
    out.manifest.seed = manifest.value("seed", 0ULL);
    out.manifest.digest = manifest.at("digest").get<std::string>();
  } catch (const std::exception& e) {
    throw DatasetError(DatasetError::Kind::BadHeader, std::string("dataset manifest missing fields: ") + e.what());
  }

  const std::size_t n = static_cast<std::size_t>(out.manifest.count);
  const std::size_t sample_floats = n == 0 ? 0 : static_cast<std::size_t>(shape_numel(out.manifest.shape));
  need(n * 4, "label block");
  const std::size_t labels_off = off;
  off += n * 4;
  need(n * sample_floats * 4, "tensor block");
  const std::size_t data_off = off;
  off += n * sample_floats * 4;

  const std::uint64_t digest =
      fnv1a64(std::span(bytes.data() + data_off, n * sample_floats * 4), fnv1a64(std::span(bytes.data() + labels_off, n * 4)));
  if (hex64(digest) != out.manifest.digest)
    throw DatasetError(DatasetError::Kind::DigestMismatch,
                       "dataset digest mismatch: file is corrupt or was edited (" + hex64(digest) + " vs manifest " +
                           out.manifest.digest + ")");

  out.data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int32_t label;
    std::memcpy(&label, bytes.data() + labels_off + i * 4, 4);
    Tensor img = Tensor::zeros(out.manifest.shape);
    std::memcpy(img.data.data(), bytes.data() + data_off + i * sample_floats * 4, sample_floats * 4);
    out.data.push_back({std::move(img), label});
  }
  return out;
}

}  // namespace defgate

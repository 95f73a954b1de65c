#include "defgate/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace defgate {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'G', 'N', 'N'};
constexpr std::uint16_t kVersion = 1;

json layer_to_json(const LayerSpec& layer) {
  struct V {
    json operator()(const Conv2d& c) const {
      return {{"type", "conv2d"}, {"in", c.in_ch}, {"out", c.out_ch}, {"k", c.kernel}, {"s", c.stride}, {"p", c.pad}};
    }
    json operator()(const TConv2d& c) const {
      return {{"type", "transposed_conv2d"}, {"in", c.in_ch}, {"out", c.out_ch}, {"k", c.kernel},
              {"s", c.stride},               {"p", c.pad},    {"op", c.out_pad}};
    }
    json operator()(const Dense& d) const { return {{"type", "dense"}, {"in", d.in}, {"out", d.out}}; }
    json operator()(const Relu&) const { return {{"type", "relu"}}; }
    json operator()(const LeakyRelu& l) const { return {{"type", "leaky_relu"}, {"alpha", l.alpha}}; }
    json operator()(const AvgPool& p) const { return {{"type", "avg_pool"}, {"k", p.kernel}}; }
    json operator()(const Flatten&) const { return {{"type", "flatten"}}; }
    json operator()(const Softmax&) const { return {{"type", "softmax"}}; }
  };
  return std::visit(V{}, layer);
}

LayerSpec layer_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv2d") return Conv2d{j.at("in"), j.at("out"), j.at("k"), j.at("s"), j.at("p")};
  if (type == "transposed_conv2d")
    return TConv2d{j.at("in"), j.at("out"), j.at("k"), j.at("s"), j.at("p"), j.value("op", 0)};
  if (type == "dense") return Dense{j.at("in"), j.at("out")};
  if (type == "relu") return Relu{};
  if (type == "leaky_relu") return LeakyRelu{j.at("alpha")};
  if (type == "avg_pool") return AvgPool{j.at("k")};
  if (type == "flatten") return Flatten{};
  if (type == "softmax") return Softmax{};
  throw CheckpointError(CheckpointError::Kind::BadHeader, "unknown layer type '" + type + "'");
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& off) {
  if (off + sizeof(T) > bytes.size())
    throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint stream truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[off + i]) << (8 * i);
  off += sizeof(T);
  return v;
}

}  // namespace

std::string network_spec_to_json(const NetworkSpec& spec) {
  json j;
  j["input_shape"] = spec.input_shape;
  j["layers"] = json::array();
  for (const auto& l : spec.layers) j["layers"].push_back(layer_to_json(l));
  return j.dump();
}

NetworkSpec network_spec_from_json(const std::string& text) {
  json j = json::parse(text);
  NetworkSpec spec;
  spec.input_shape = j.at("input_shape").get<std::vector<int>>();
  for (const auto& lj : j.at("layers")) spec.layers.push_back(layer_from_json(lj));
  spec.validate();
  return spec;
}

std::vector<std::uint8_t> save_checkpoint(const Network& net, const CheckpointMeta& meta) {
  net.spec.validate();
  json header;
  header["spec"] = json::parse(network_spec_to_json(net.spec));
  header["meta"] = {{"seed", meta.seed}, {"epochs", meta.epochs}, {"final_loss", meta.final_loss}, {"name", meta.name}};
  const std::string header_text = header.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());

  const std::vector<float> w = net.flat_weights();
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(w.size()));
  const std::size_t base = out.size();
  out.resize(base + w.size() * 4);
  static_assert(std::endian::native == std::endian::little, "weight block assumes little-endian host");
  std::memcpy(out.data() + base, w.data(), w.size() * 4);
  return out;
}

LoadedCheckpoint load_checkpoint(std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::BadMagic, "bad checkpoint magic (want MGNN)");
  off = 4;
  const auto version = get_le<std::uint16_t>(bytes, off);
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_le<std::uint32_t>(bytes, off);
  if (off + header_len > bytes.size())
    throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint stream truncated in header");
  std::string header_text(reinterpret_cast<const char*>(bytes.data() + off), header_len);
  off += header_len;

  LoadedCheckpoint lc;
  try {
    json header = json::parse(header_text);
    NetworkSpec spec = network_spec_from_json(header.at("spec").dump());
    const auto& m = header.at("meta");
    lc.meta.seed = m.value("seed", 0ULL);
    lc.meta.epochs = m.value("epochs", 0);
    lc.meta.final_loss = m.value("final_loss", 0.0f);
    lc.meta.name = m.value("name", "");
    lc.net = Network{std::move(spec), {}};
    for (const auto& layer : lc.net.spec.layers) lc.net.params.push_back(make_layer_params(layer));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::BadHeader, std::string("bad checkpoint header: ") + e.what());
  }

  const auto count = get_le<std::uint64_t>(bytes, off);
  if (count != static_cast<std::uint64_t>(lc.net.param_count()))
    throw CheckpointError(CheckpointError::Kind::WeightCountMismatch,
                          "checkpoint weight count " + std::to_string(count) + " does not match spec (" +
                              std::to_string(lc.net.param_count()) + ")");
  if (off + count * 4 > bytes.size())
    throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint stream truncated in weight block");
  std::vector<float> w(count);
  std::memcpy(w.data(), bytes.data() + off, count * 4);
  lc.net.set_flat_weights(w);
  return lc;
}

void save_checkpoint_file(const std::filesystem::path& path, const Network& net, const CheckpointMeta& meta) {
  const auto bytes = save_checkpoint(net, meta);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint file for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing checkpoint file: " + path.string());
}

LoadedCheckpoint load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

}  // namespace defgate

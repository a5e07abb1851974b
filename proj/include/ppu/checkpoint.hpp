#pragma once

// Binary checkpoint, little-endian throughout:
//
//   "3PU-CKPT-1\n"
//   u32 length, config text (key = value lines)
//   u32 stage reached
//   u32 tensor count, then per tensor:
//     u32 path length, path, u32 rank, u64 dims[rank], f64 payload (row-major)
//   u32 has_adam; if set: f64 lr, beta1, beta2, epsilon, then per tensor:
//     u64 step, u64 moment length, f64 m[], f64 v[]

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ppu/adam.hpp"
#include "ppu/error.hpp"
#include "ppu/net.hpp"
#include "ppu/point_io.hpp"

namespace ppu {

inline constexpr std::string_view kCheckpointMagic = "3PU-CKPT-1\n";

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(bits.begin(), bits.end());
    }
    out_.append(reinterpret_cast<const char*>(bits.data()), bits.size());
  }
  void put_u32(std::size_t v) { put(static_cast<std::uint32_t>(v)); }
  void put_u64(std::uint64_t v) { put(v); }
  void put_f64(double v) { put(v); }
  void put_bytes(std::string_view s) { out_.append(s); }
  void put_string(std::string_view s) {
    put_u32(s.size());
    put_bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<unsigned char, sizeof(T)> bits;
    std::memcpy(bits.data(), in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(bits.begin(), bits.end());
    }
    return std::bit_cast<T>(bits);
  }
  std::uint32_t get_u32() { return get<std::uint32_t>(); }
  std::uint64_t get_u64() { return get<std::uint64_t>(); }
  double get_f64() { return get<double>(); }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return std::string(get_bytes(get_u32())); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string net_config_to_text(const NetConfig& c) {
  std::string widths;
  for (std::size_t i = 0; i < c.expansion_widths.size(); ++i) {
    if (i) widths += ",";
    widths += std::to_string(c.expansion_widths[i]);
  }
  std::ostringstream s;
  s << "levels = " << c.levels << "\n"
    << "dim = " << c.dim << "\n"
    << "compress_width = " << c.compress_width << "\n"
    << "growth = " << c.growth << "\n"
    << "blocks = " << c.blocks << "\n"
    << "layers_per_block = " << c.layers_per_block << "\n"
    << "knn_k = " << c.knn_k << "\n"
    << "interp_k = " << c.interp_k << "\n"
    << "expansion_widths = " << widths << "\n"
    << "activation = " << to_string(c.activation) << "\n"
    << "use_feature_knn = " << (c.use_feature_knn ? 1 : 0) << "\n"
    << "use_dense_links = " << (c.use_dense_links ? 1 : 0) << "\n";
  return s.str();
}

inline NetConfig net_config_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("bad checkpoint config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("checkpoint config lacks '" + key + "'");
    return it->second;
  };
  auto num = [&](const std::string& key) {
    try {
      return static_cast<std::size_t>(std::stoull(get(key)));
    } catch (const std::logic_error&) {
      throw FormatError("checkpoint config '" + key + "' is not a count");
    }
  };
  NetConfig c;
  c.levels = num("levels");
  c.dim = num("dim");
  c.compress_width = num("compress_width");
  c.growth = num("growth");
  c.blocks = num("blocks");
  c.layers_per_block = num("layers_per_block");
  c.knn_k = num("knn_k");
  c.interp_k = num("interp_k");
  c.expansion_widths.clear();
  std::istringstream widths(get("expansion_widths"));
  std::string w;
  while (std::getline(widths, w, ',')) {
    if (!w.empty()) c.expansion_widths.push_back(std::stoull(w));
  }
  c.activation = parse_activation(get("activation"));
  c.use_feature_knn = num("use_feature_knn") != 0;
  c.use_dense_links = num("use_dense_links") != 0;
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
  return c;
}

struct Checkpoint {
  NetworkParams params;
  std::size_t stage = 0;
  std::optional<AdamState> adam;
};

inline std::string serialize_checkpoint(const NetworkParams& params, std::size_t stage,
                                        const AdamState* adam = nullptr) {
  detail::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put_string(net_config_to_text(params.config));
  w.put_u32(stage);
  const auto named = params.named();
  w.put_u32(named.size());
  for (const auto& nt : named) {
    w.put_string(nt.path);
    w.put_u32(nt.tensor.rank());
    for (std::size_t d : nt.tensor.shape()) w.put_u64(d);
    for (double v : nt.tensor.data()) w.put_f64(v);
  }
  w.put_u32(adam ? 1 : 0);
  if (adam) {
    w.put_f64(adam->config.learning_rate);
    w.put_f64(adam->config.beta1);
    w.put_f64(adam->config.beta2);
    w.put_f64(adam->config.epsilon);
    for (std::size_t i = 0; i < named.size(); ++i) {
      const AdamSlot empty;
      const AdamSlot& s = i < adam->slots.size() ? adam->slots[i] : empty;
      w.put_u64(s.step);
      w.put_u64(s.m.size());
      for (double v : s.m) w.put_f64(v);
      for (double v : s.v) w.put_f64(v);
    }
  }
  return w.take();
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("not a 3PU-CKPT-1 checkpoint (bad header)");
  }
  detail::ByteReader r(bytes.substr(kCheckpointMagic.size()));
  Checkpoint ck;
  const NetConfig cfg = net_config_from_text(r.get_string());
  ck.stage = r.get_u32();
  ck.params = init_network(cfg, 0);
  auto named = ck.params.named();
  const std::uint32_t count = r.get_u32();
  if (count != named.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) +
                      " tensors, configuration implies " +
                      std::to_string(named.size()));
  }
  for (auto& nt : named) {
    const std::string path = r.get_string();
    if (path != nt.path) {
      throw FormatError("checkpoint tensor '" + path + "' where '" + nt.path +
                        "' was expected");
    }
    Shape shape(r.get_u32());
    for (auto& d : shape) d = r.get_u64();
    if (shape != nt.tensor.shape()) {
      throw FormatError("checkpoint tensor '" + path + "' has shape " +
                        shape_str(shape) + ", expected " +
                        shape_str(nt.tensor.shape()));
    }
    for (double& v : nt.tensor.data()) v = r.get_f64();
  }
  if (r.get_u32() != 0) {
    AdamState adam;
    adam.config.learning_rate = r.get_f64();
    adam.config.beta1 = r.get_f64();
    adam.config.beta2 = r.get_f64();
    adam.config.epsilon = r.get_f64();
    adam.slots.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
      AdamSlot& s = adam.slots[i];
      s.step = r.get_u64();
      const std::uint64_t len = r.get_u64();
      if (len != 0 && len != named[i].tensor.numel()) {
        throw FormatError("checkpoint optimizer state has wrong length");
      }
      s.m.resize(len);
      s.v.resize(len);
      for (double& v : s.m) v = r.get_f64();
      for (double& v : s.v) v = r.get_f64();
    }
    ck.adam = std::move(adam);
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const NetworkParams& params, std::size_t stage,
                            const AdamState* adam = nullptr) {
  const std::string bytes = serialize_checkpoint(params, stage, adam);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace ppu

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "strkm/errors.hpp"
#include "strkm/model.hpp"

namespace strkm {

// Model archive, version 1. All integers and doubles are little-endian.
//
//   offset 0   magic     8 bytes  "STRKMARC"
//   offset 8   version   u32      1
//   offset 12  count     u32      number of tensors
//   then `count` tensors:
//              name_len  u32
//              name      name_len bytes (ASCII)
//              rank      u32
//              dims      rank x u64
//              values    prod(dims) x f64 (IEEE-754 binary64; rank 0 holds one value)
//   trailer    checksum  u64      FNV-1a 64 over every byte from offset 8 up to
//                                 the trailer
//
// Tensors written by save_model, in order:
//   meta.dims          [3]    D, l, m
//   meta.lambda        []
//   meta.seed          [2]    high and low 32 bits of the training seed
//   meta.epochs        []
//   encoder.layers     []     layer count L
//   encoder.<k>.weight [out, in]
//   encoder.<k>.bias   [out]
//   encoder.<k>.activation [] 0 linear, 1 sigmoid, 2 prelu
//   encoder.<k>.slope  []
//   decoder.*          same layout as encoder.*
//   U                  [l, m]
//   feature_mean       [l]

inline constexpr char kArchiveMagic[8] = {'S', 'T', 'R', 'K', 'M', 'A', 'R', 'C'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct ArchiveMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
};

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

namespace detail {

inline std::uint64_t fnv1a64(const unsigned char* p, std::size_t n) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
  void put_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }
  std::vector<unsigned char>& bytes() noexcept { return bytes_; }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::size_t end, std::string path)
      : bytes_(bytes), end_(end), path_(std::move(path)) {}

  std::size_t offset() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ >= end_; }

  std::uint64_t get_le(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t get_u64() { return get_le(8); }
  double get_f64() { return std::bit_cast<double>(get_le(8)); }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) {
      throw FormatError(path_ + ": truncated archive at offset " + std::to_string(pos_));
    }
  }
  const std::vector<unsigned char>& bytes_;
  std::size_t end_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline void add_tensor(std::vector<std::pair<std::string, Tensor>>& out, std::string name,
                       std::vector<std::uint64_t> dims, std::vector<double> values) {
  out.emplace_back(std::move(name), Tensor{std::move(dims), std::move(values)});
}

inline double activation_code(Activation a) {
  switch (a) {
    case Activation::Linear: return 0.0;
    case Activation::Sigmoid: return 1.0;
    case Activation::PRelu: return 2.0;
  }
  return 0.0;
}

inline void add_mlp(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                    const Mlp& net) {
  add_tensor(out, prefix + ".layers", {}, {static_cast<double>(net.layers.size())});
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& L = net.layers[k];
    const std::string p = prefix + "." + std::to_string(k);
    add_tensor(out, p + ".weight", {L.out_dim(), L.in_dim()}, L.weight.values());
    add_tensor(out, p + ".bias", {L.bias.size()}, L.bias);
    add_tensor(out, p + ".activation", {}, {activation_code(L.activation)});
    add_tensor(out, p + ".slope", {}, {L.slope});
  }
}

class TensorMap {
 public:
  TensorMap(std::map<std::string, Tensor> tensors, std::string path)
      : tensors_(std::move(tensors)), path_(std::move(path)) {}

  const Tensor& get(const std::string& name, std::size_t rank) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw FormatError(path_ + ": missing tensor '" + name + "'");
    if (it->second.dims.size() != rank) {
      throw FormatError(path_ + ": tensor '" + name + "' has rank " +
                        std::to_string(it->second.dims.size()) + ", expected " +
                        std::to_string(rank));
    }
    return it->second;
  }

  double scalar(const std::string& name) const { return get(name, 0).values[0]; }

  std::size_t count(const std::string& name) const {
    const double v = scalar(name);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e15) {
      throw FormatError(path_ + ": tensor '" + name + "' is not a count");
    }
    return static_cast<std::size_t>(v);
  }

  Mlp mlp(const std::string& prefix) const {
    Mlp net;
    const std::size_t n = count(prefix + ".layers");
    for (std::size_t k = 0; k < n; ++k) {
      const std::string p = prefix + "." + std::to_string(k);
      const Tensor& w = get(p + ".weight", 2);
      const Tensor& b = get(p + ".bias", 1);
      DenseLayer L;
      L.weight = Matrix(w.dims[0], w.dims[1], w.values);
      L.bias = b.values;
      const double code = scalar(p + ".activation");
      if (code == 0.0) L.activation = Activation::Linear;
      else if (code == 1.0) L.activation = Activation::Sigmoid;
      else if (code == 2.0) L.activation = Activation::PRelu;
      else throw FormatError(path_ + ": unknown activation code in '" + p + "'");
      L.slope = scalar(p + ".slope");
      net.layers.push_back(std::move(L));
    }
    return net;
  }

 private:
  std::map<std::string, Tensor> tensors_;
  std::string path_;
};

}  // namespace detail

inline std::vector<unsigned char> serialize_model(const StRkmModel& model,
                                                  const ArchiveMetadata& meta = {}) {
  model.validate();
  if (!model.trained()) throw ValidationError("serialize_model: model is untrained");
  const auto d = model.dims();
  std::vector<std::pair<std::string, Tensor>> tensors;
  detail::add_tensor(tensors, "meta.dims", {3},
                     {static_cast<double>(d.input), static_cast<double>(d.feature),
                      static_cast<double>(d.latent)});
  detail::add_tensor(tensors, "meta.lambda", {}, {model.lambda});
  detail::add_tensor(tensors, "meta.seed", {2},
                     {static_cast<double>(meta.seed >> 32),
                      static_cast<double>(meta.seed & 0xffffffffULL)});
  detail::add_tensor(tensors, "meta.epochs", {}, {static_cast<double>(meta.epochs)});
  detail::add_mlp(tensors, "encoder", model.encoder);
  detail::add_mlp(tensors, "decoder", model.decoder);
  detail::add_tensor(tensors, "U", {d.feature, d.latent}, model.U.matrix().values());
  detail::add_tensor(tensors, "feature_mean", {d.feature}, model.feature_mean);

  detail::ByteWriter w;
  w.put_bytes(kArchiveMagic, sizeof kArchiveMagic);
  w.put_u32(kArchiveVersion);
  w.put_u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.put_u32(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put_u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto dim : t.dims) w.put_u64(dim);
    for (double v : t.values) w.put_f64(v);
  }
  auto& bytes = w.bytes();
  const std::uint64_t sum = detail::fnv1a64(bytes.data() + 8, bytes.size() - 8);
  w.put_u64(sum);
  return std::move(w.bytes());
}

struct LoadedModel {
  StRkmModel model;
  ArchiveMetadata meta;
};

inline LoadedModel deserialize_model(const std::vector<unsigned char>& bytes,
                                     const std::string& path = "<memory>") {
  if (bytes.size() < 8 + 4 + 4 + 8 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0) {
    throw FormatError(path + ": not a model archive (bad magic at offset 0)");
  }
  const std::size_t end = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= std::uint64_t{bytes[end + i]} << (8 * i);
  if (detail::fnv1a64(bytes.data() + 8, end - 8) != stored) {
    throw FormatError(path + ": checksum mismatch (archive corrupted)");
  }

  detail::ByteReader r(bytes, end, path);
  r.get_string(8);
  const std::uint32_t version = r.get_u32();
  if (version != kArchiveVersion) {
    throw FormatError(path + ": unsupported archive version " + std::to_string(version));
  }
  const std::uint32_t count = r.get_u32();
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t at = r.offset();
    const std::uint32_t name_len = r.get_u32();
    if (name_len > 4096) throw FormatError(path + ": implausible name length at offset " + std::to_string(at));
    std::string name = r.get_string(name_len);
    const std::uint32_t rank = r.get_u32();
    if (rank > 8) throw FormatError(path + ": implausible rank for '" + name + "'");
    Tensor tensor;
    std::uint64_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      tensor.dims.push_back(r.get_u64());
      total *= tensor.dims.back();
      if (total > (end - r.offset()) / 8 + 1) {
        throw FormatError(path + ": tensor '" + name + "' larger than the archive");
      }
    }
    tensor.values.reserve(total);
    for (std::uint64_t k = 0; k < total; ++k) tensor.values.push_back(r.get_f64());
    if (!tensors.emplace(name, std::move(tensor)).second) {
      throw FormatError(path + ": duplicate tensor '" + name + "'");
    }
  }
  if (!r.done()) throw FormatError(path + ": trailing bytes at offset " + std::to_string(r.offset()));

  const detail::TensorMap map(std::move(tensors), path);
  LoadedModel out;
  const Tensor& dims = map.get("meta.dims", 1);
  if (dims.values.size() != 3) throw FormatError(path + ": meta.dims must hold 3 values");
  out.model.lambda = map.scalar("meta.lambda");
  const Tensor& seed = map.get("meta.seed", 1);
  if (seed.values.size() != 2) throw FormatError(path + ": meta.seed must hold 2 values");
  out.meta.seed = (static_cast<std::uint64_t>(seed.values[0]) << 32) |
                  static_cast<std::uint64_t>(seed.values[1]);
  out.meta.epochs = map.count("meta.epochs");
  out.model.encoder = map.mlp("encoder");
  out.model.decoder = map.mlp("decoder");
  const Tensor& U = map.get("U", 2);
  try {
    out.model.U = StiefelPoint(Matrix(U.dims[0], U.dims[1], U.values));
    out.model.feature_mean = map.get("feature_mean", 1).values;
    out.model.validate();
  } catch (const ValidationError& e) {
    throw FormatError(path + ": inconsistent archive: " + e.what());
  }
  const auto d = out.model.dims();
  if (d.input != dims.values[0] || d.feature != dims.values[1] || d.latent != dims.values[2] ||
      !out.model.trained()) {
    throw FormatError(path + ": tensor shapes disagree with meta.dims");
  }
  return out;
}

inline void save_model(const std::string& path, const StRkmModel& model,
                       const ArchiveMetadata& meta = {}) {
  const auto bytes = serialize_model(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_model(bytes, path);
}

}  // namespace strkm

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsetab/hash.hpp"
#include "sparsetab/network.hpp"

namespace sparsetab {

// Model container, all integers little-endian:
//
//   magic        8 bytes  "SPTBMODL"
//   version      u32      kModelFormatVersion
//   header_len   u64      followed by a UTF-8 JSON header (spec, mask
//                         metadata, free-form metadata)
//   mask_count   u64      per mask: u64 rows, u64 cols, ceil(rows*cols/8)
//                         bytes of row-major bits, LSB first
//   layer_count  u64      per layer (head last): weight (u64 rows, u64 cols,
//                         f64 data), bias (u64 len, f64 data), attention
//                         (u64 len, f64 data)
//   checksum     u64      FNV-1a 64 over every preceding byte
inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[8] = {'S', 'P', 'T', 'B', 'M', 'O', 'D', 'L'};

using json = nlohmann::json;

inline json mask_metadata_to_json(const MaskMatrix& m) {
  return json{{"provenance", to_string(m.provenance)},
              {"params", m.params},
              {"feature_names", m.feature_names},
              {"unit_names", m.unit_names},
              {"warnings", m.warnings},
              {"pruned_columns", m.pruned_columns}};
}

inline json spec_to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"kind", to_string(l.kind)},
                      {"units", l.units},
                      {"activation", to_string(l.activation)},
                      {"score", to_string(l.score)},
                      {"dropout_rate", l.dropout_rate},
                      {"mask", l.mask}});
  }
  return json{{"input_dim", spec.input_dim},
              {"layers", layers},
              {"head", {{"kind", to_string(spec.head.kind)}, {"classes", spec.head.classes}}}};
}

inline NetworkSpec spec_from_json(const json& j) {
  NetworkSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  for (const auto& l : j.at("layers")) {
    LayerSpec ls;
    ls.kind = parse_layer_kind(l.at("kind").get<std::string>());
    ls.units = l.at("units").get<std::size_t>();
    ls.activation = parse_activation(l.at("activation").get<std::string>());
    ls.score = parse_score_kind(l.at("score").get<std::string>());
    ls.dropout_rate = l.at("dropout_rate").get<double>();
    ls.mask = l.at("mask").get<std::size_t>();
    s.layers.push_back(ls);
  }
  s.head.kind = parse_head_kind(j.at("head").at("kind").get<std::string>());
  s.head.classes = j.at("head").at("classes").get<std::size_t>();
  return s;
}

struct ModelFile {
  NetworkSpec spec;
  ParameterSet params;
  json metadata = json::object();
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void doubles(std::span<const double> v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw FormatError("model file ends unexpectedly");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    need(n * 8);
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const NetworkSpec& spec, const ParameterSet& params,
                                                 const json& metadata = json::object(),
                                                 std::uint32_t version = kModelFormatVersion) {
  spec.validate();
  detail::ByteWriter w;
  w.bytes(kModelMagic, sizeof(kModelMagic));
  w.u32(version);
  json header = {{"spec", spec_to_json(spec)}, {"masks", json::array()}, {"metadata", metadata}};
  for (const auto& m : spec.masks) header["masks"].push_back(mask_metadata_to_json(m));
  const std::string text = header.dump();
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  w.u64(spec.masks.size());
  for (const auto& m : spec.masks) {
    w.u64(m.a.rows());
    w.u64(m.a.cols());
    std::vector<std::uint8_t> bits((m.a.size() + 7) / 8, 0);
    for (std::size_t k = 0; k < m.a.size(); ++k)
      if (m.a.data()[k] != 0.0) bits[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
    w.bytes(bits.data(), bits.size());
  }
  w.u64(params.layers.size());
  for (const auto& l : params.layers) {
    w.u64(l.weight.rows());
    w.u64(l.weight.cols());
    for (double d : l.weight.data()) w.f64(d);
    w.doubles(l.bias);
    w.doubles(l.attention);
  }
  const std::uint64_t sum = fnv1a64(w.buffer());
  w.u64(sum);
  return std::move(w.buffer());
}

inline ModelFile deserialize_model(std::span<const std::uint8_t> data) {
  if (data.size() < sizeof(kModelMagic) + 4 + 8 ||
      std::memcmp(data.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
    if (data.size() >= sizeof(kModelMagic) &&
        std::memcmp(data.data(), kModelMagic, sizeof(kModelMagic)) == 0)
      throw ChecksumError("model file truncated");
    throw FormatError("not a model file (bad magic)");
  }
  const auto body = data.first(data.size() - 8);
  detail::ByteReader tail(data.last(8));
  if (fnv1a64(body) != tail.u64()) throw ChecksumError("model file checksum mismatch");

  detail::ByteReader r(body);
  r.take(sizeof(kModelMagic));
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw VersionError("model format version " + std::to_string(version) +
                       " is not supported (reader version " +
                       std::to_string(kModelFormatVersion) + ")");
  const auto text = r.take(r.u64());
  json header;
  try {
    header = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  ModelFile mf;
  try {
    mf.spec = spec_from_json(header.at("spec"));
    mf.metadata = header.value("metadata", json::object());
    const auto& mask_meta = header.at("masks");
    const std::uint64_t n_masks = r.u64();
    if (n_masks != mask_meta.size()) throw FormatError("mask count mismatch");
    for (std::uint64_t i = 0; i < n_masks; ++i) {
      MaskMatrix m;
      const std::size_t rows = r.u64(), cols = r.u64();
      const auto bits = r.take((rows * cols + 7) / 8);
      m.a = Matrix(rows, cols);
      for (std::size_t k = 0; k < rows * cols; ++k)
        m.a.data()[k] = (bits[k / 8] >> (k % 8)) & 1u ? 1.0 : 0.0;
      const auto& meta = mask_meta[i];
      m.provenance = parse_provenance(meta.at("provenance").get<std::string>());
      m.params = meta.at("params").get<std::map<std::string, std::string>>();
      m.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
      m.unit_names = meta.at("unit_names").get<std::vector<std::string>>();
      m.warnings = meta.at("warnings").get<std::vector<std::string>>();
      m.pruned_columns = meta.at("pruned_columns").get<std::size_t>();
      mf.spec.masks.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  const std::uint64_t n_layers = r.u64();
  if (n_layers != mf.spec.layers.size() + 1) throw FormatError("layer count mismatch");
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    LayerParams lp;
    const std::size_t rows = r.u64(), cols = r.u64();
    r.need(rows * cols * 8);
    std::vector<double> w(rows * cols);
    for (auto& d : w) d = r.f64();
    lp.weight = Matrix(rows, cols, std::move(w));
    lp.bias = r.doubles();
    lp.attention = r.doubles();
    mf.params.layers.push_back(std::move(lp));
  }
  if (r.position() != body.size()) throw FormatError("trailing bytes in model file");
  mf.spec.validate();
  return mf;
}

inline void save_model(const NetworkSpec& spec, const ParameterSet& params, const std::string& path,
                       const json& metadata = json::object()) {
  const auto bytes = serialize_model(spec, params, metadata);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

inline ModelFile load_model(const std::string& path) { return deserialize_model(read_file_bytes(path)); }

// Hash of the serialized parameters of layers [0, stop); used to verify that
// frozen layers are untouched.
inline std::string parameter_hash(const ParameterSet& params, std::size_t stop) {
  detail::ByteWriter w;
  for (std::size_t i = 0; i < stop && i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    w.u64(l.weight.rows());
    w.u64(l.weight.cols());
    for (double d : l.weight.data()) w.f64(d);
    w.doubles(l.bias);
    w.doubles(l.attention);
  }
  return sha256_hex(w.buffer());
}

}  // namespace sparsetab

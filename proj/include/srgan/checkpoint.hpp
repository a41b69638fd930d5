#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "srgan/trainer.hpp"

namespace srgan {

// Checkpoint layout, all integers little-endian:
//   "SRGN" | u32 version | u64 payload bytes | payload | u64 FNV-1a of everything before it
// payload:
//   u64 metadata bytes | metadata JSON | u64 tensor count |
//   per tensor: u32 name bytes | name | u32 ndim | u64 dims[ndim] | f64 values (row-major)
inline constexpr char kCheckpointMagic[4] = {'S', 'R', 'G', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_integral_v<U> || std::is_floating_point_v<U>);
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    bytes.insert(bytes.end(), raw, raw + sizeof(U));
  }
  void put_bytes(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, p_ + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, raw, sizeof(U));
    return v;
  }
  std::string get_bytes(std::uint64_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }
  bool done() const { return pos_ == n_; }

 private:
  void need(std::uint64_t k) const {
    if (k > n_ - pos_) throw FormatError("checkpoint: truncated payload");
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

template <typename T>
void put_tensor(ByteWriter& w, const std::string& name, const nd::Tensor<T>& t) {
  w.put(static_cast<std::uint32_t>(name.size()));
  w.put_bytes(name);
  w.put(std::uint32_t{2});
  w.put(static_cast<std::uint64_t>(t.rows()));
  w.put(static_cast<std::uint64_t>(t.cols()));
  for (Eigen::Index i = 0; i < t.size(); ++i) w.put(static_cast<double>(t.data()[i]));
}

template <typename T>
void for_each_optimizer_tensor(const std::string& name, const AdamState<T>& s,
                               std::map<std::string, const nd::Tensor<T>*>& out) {
  for (std::size_t k = 0; k < s.m.size(); ++k) {
    out["opt." + name + ".m." + std::to_string(k)] = &s.m[k];
    out["opt." + name + ".v." + std::to_string(k)] = &s.v[k];
  }
}

struct StoredTensor {
  Eigen::Index rows = 0, cols = 0;
  std::vector<double> values;
};

template <typename T>
void assign(nd::Tensor<T>& dst, const StoredTensor& src, const std::string& name) {
  if (dst.rows() != src.rows || dst.cols() != src.cols)
    throw DimensionError("checkpoint: tensor '" + name + "' has shape " + nd::shape_str(src.rows, src.cols) +
                         " but the architecture expects " + nd::shape_str(dst));
  for (Eigen::Index i = 0; i < dst.size(); ++i)
    dst.data()[i] = static_cast<T>(src.values[static_cast<std::size_t>(i)]);
}

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> serialize(const ModelBundle<T>& b) {
  nlohmann::json meta;
  meta["config"] = b.config;
  meta["shape"] = {{"d_v", b.shape.d_v},
                   {"d_s", b.shape.d_s},
                   {"d_z", b.shape.d_z},
                   {"gen_hidden", b.shape.gen_hidden},
                   {"disc_hidden", b.shape.disc_hidden},
                   {"enc_hidden", b.shape.enc_hidden},
                   {"post_hidden", b.shape.post_hidden}};
  meta["head_classes"] = b.head_classes;
  meta["iteration"] = b.iteration;
  meta["adam_steps"] = {{"srn", b.opt_srn.step},
                        {"gen", b.opt_gen.step},
                        {"disc", b.opt_disc.step},
                        {"enc", b.opt_enc.step},
                        {"post", b.opt_post.step}};

  std::map<std::string, const nd::Tensor<T>*> table;
  b.for_each_network_tensor([&](const std::string& name, const nd::Tensor<T>& t) { table[name] = &t; });
  detail::for_each_optimizer_tensor("srn", b.opt_srn, table);
  detail::for_each_optimizer_tensor("gen", b.opt_gen, table);
  detail::for_each_optimizer_tensor("disc", b.opt_disc, table);
  detail::for_each_optimizer_tensor("enc", b.opt_enc, table);
  detail::for_each_optimizer_tensor("post", b.opt_post, table);

  detail::ByteWriter payload;
  const std::string meta_text = meta.dump();
  payload.put(static_cast<std::uint64_t>(meta_text.size()));
  payload.put_bytes(meta_text);
  payload.put(static_cast<std::uint64_t>(table.size()));
  for (const auto& [name, t] : table) detail::put_tensor(payload, name, *t);

  detail::ByteWriter out;
  out.put_bytes(std::string(kCheckpointMagic, 4));
  out.put(kCheckpointVersion);
  out.put(static_cast<std::uint64_t>(payload.bytes.size()));
  out.bytes.insert(out.bytes.end(), payload.bytes.begin(), payload.bytes.end());
  out.put(detail::fnv1a(out.bytes.data(), out.bytes.size()));
  return out.bytes;
}

template <typename T>
ModelBundle<T> deserialize(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t header = 4 + 4 + 8;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic (not an SRGN file)");
  if (bytes.size() < header + 8) throw FormatError("checkpoint: truncated header");
  detail::ByteReader head(bytes.data() + 4, header - 4);
  const auto version = head.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto payload_size = head.get<std::uint64_t>();
  if (payload_size > bytes.size() - header - 8) throw FormatError("checkpoint: truncated payload");
  if (payload_size < bytes.size() - header - 8) throw FormatError("checkpoint: trailing bytes after checksum");
  const std::size_t body = header + static_cast<std::size_t>(payload_size);
  detail::ByteReader tail(bytes.data() + body, 8);
  if (tail.get<std::uint64_t>() != detail::fnv1a(bytes.data(), body))
    throw FormatError("checkpoint: checksum mismatch");

  detail::ByteReader r(bytes.data() + header, static_cast<std::size_t>(payload_size));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.get_bytes(r.get<std::uint64_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  std::map<std::string, detail::StoredTensor> stored;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = r.get_bytes(r.get<std::uint32_t>());
    if (r.get<std::uint32_t>() != 2) throw FormatError("checkpoint: tensor '" + name + "' is not rank 2");
    detail::StoredTensor t;
    t.rows = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    t.cols = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    t.values.resize(static_cast<std::size_t>(t.rows * t.cols));
    for (auto& v : t.values) v = r.get<double>();
    stored[name] = std::move(t);
  }
  if (!r.done()) throw FormatError("checkpoint: unexpected bytes after tensor table");

  ModelBundle<T> b;
  try {
    TrainConfig cfg = meta.at("config").get<TrainConfig>();
    NetworkShape shape;
    const auto& s = meta.at("shape");
    shape.d_v = s.at("d_v").get<Eigen::Index>();
    shape.d_s = s.at("d_s").get<Eigen::Index>();
    shape.d_z = s.at("d_z").get<Eigen::Index>();
    shape.gen_hidden = s.at("gen_hidden").get<Eigen::Index>();
    shape.disc_hidden = s.at("disc_hidden").get<Eigen::Index>();
    shape.enc_hidden = s.at("enc_hidden").get<Eigen::Index>();
    shape.post_hidden = s.at("post_hidden").get<Eigen::Index>();
    b = make_bundle<T>(cfg, shape, meta.at("head_classes").get<std::vector<int>>());
    b.iteration = meta.at("iteration").get<std::int64_t>();
    const auto& steps = meta.at("adam_steps");
    b.opt_srn.step = steps.at("srn").get<std::int64_t>();
    b.opt_gen.step = steps.at("gen").get<std::int64_t>();
    b.opt_disc.step = steps.at("disc").get<std::int64_t>();
    b.opt_enc.step = steps.at("enc").get<std::int64_t>();
    b.opt_post.step = steps.at("post").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }

  std::size_t used = 0;
  auto take = [&](const std::string& name, nd::Tensor<T>& dst) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    detail::assign(dst, it->second, name);
    ++used;
  };
  b.for_each_network_tensor(take);
  auto take_optimizer = [&](const std::string& name, AdamState<T>& s, const auto& params) {
    if (!stored.count("opt." + name + ".m.0")) return;
    for (std::size_t k = 0; k < params.size(); ++k) {
      s.m.push_back(nd::Tensor<T>::Zero(params[k]->rows(), params[k]->cols()));
      s.v.push_back(nd::Tensor<T>::Zero(params[k]->rows(), params[k]->cols()));
      take("opt." + name + ".m." + std::to_string(k), s.m.back());
      take("opt." + name + ".v." + std::to_string(k), s.v.back());
    }
  };
  take_optimizer("srn", b.opt_srn, detail::tensors(b.srn.net));
  take_optimizer("gen", b.opt_gen, detail::tensors(b.gen.net));
  take_optimizer("disc", b.opt_disc, detail::tensors(b.disc));
  take_optimizer("enc", b.opt_enc, detail::tensors(b.enc.net));
  take_optimizer("post", b.opt_post, detail::tensors(b.post.net));
  if (used != stored.size()) throw FormatError("checkpoint: tensor table has entries the architecture does not use");
  return b;
}

template <typename T>
void save(const ModelBundle<T>& b, const std::filesystem::path& path) {
  const auto bytes = serialize(b);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("checkpoint: write failed for " + path.string());
}

template <typename T>
ModelBundle<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize<T>(bytes);
}

// Checks that a loaded bundle fits a dataset before it is used on it.
template <typename T>
void bind(const ModelBundle<T>& b, const data::Dataset& ds) {
  if (b.shape.d_v != ds.visual_width())
    throw DimensionError("model expects d_v=" + std::to_string(b.shape.d_v) + " but dataset has d_v=" +
                         std::to_string(ds.visual_width()));
  if (b.shape.d_s != ds.semantic_width())
    throw DimensionError("model expects d_s=" + std::to_string(b.shape.d_s) + " but dataset has d_s=" +
                         std::to_string(ds.semantic_width()));
  for (int c : b.head_classes)
    if (c < 0 || c >= ds.num_classes())
      throw DimensionError("model classifier refers to class " + std::to_string(c) + " but dataset has " +
                           std::to_string(ds.num_classes()) + " classes");
}

}  // namespace srgan

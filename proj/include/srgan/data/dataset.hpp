#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "srgan/ndgrad/tensor.hpp"

namespace srgan::data {

using Matrix = nd::Tensor<double>;

// Instance-level visual features with class-level semantic rows.
struct Dataset {
  Matrix visual;    // N x d_v
  Matrix semantic;  // C x d_s, row c describes class c
  std::vector<int> labels;
  std::vector<std::string> class_names;

  Eigen::Index num_instances() const { return visual.rows(); }
  Eigen::Index num_classes() const { return semantic.rows(); }
  Eigen::Index visual_width() const { return visual.cols(); }
  Eigen::Index semantic_width() const { return semantic.cols(); }
};

struct SplitSpec {
  std::vector<int> seen;
  std::vector<int> unseen;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test_seen;
  std::vector<std::size_t> test_unseen;
};

// One mean visual feature per seen class, in the order of `class_ids`.
struct VisualPivots {
  std::vector<int> class_ids;
  Matrix pivots;
  std::vector<std::size_t> counts;

  Eigen::Index index_of(int class_id) const {
    auto it = std::find(class_ids.begin(), class_ids.end(), class_id);
    if (it == class_ids.end())
      throw DataError("no pivot for class " + std::to_string(class_id));
    return static_cast<Eigen::Index>(it - class_ids.begin());
  }
};

// Per-dimension affine maps: visual onto [-1, 1] fitted on train instances,
// semantic onto [0, 1] fitted on all class rows. Constant dimensions map to 0.
struct NormalizationRecord {
  Matrix visual_min, visual_max;      // 1 x d_v
  Matrix semantic_min, semantic_max;  // 1 x d_s
  std::vector<Eigen::Index> constant_visual_dims;
  std::vector<Eigen::Index> constant_semantic_dims;

  bool flagged() const { return !constant_visual_dims.empty() || !constant_semantic_dims.empty(); }

  Matrix apply_visual(const Matrix& v) const {
    return map(v, visual_min, visual_max, -1.0, 1.0);
  }
  Matrix apply_semantic(const Matrix& s) const {
    return map(s, semantic_min, semantic_max, 0.0, 1.0);
  }
  Matrix invert_visual(const Matrix& v) const {
    return unmap(v, visual_min, visual_max, -1.0, 1.0);
  }
  Matrix invert_semantic(const Matrix& s) const {
    return unmap(s, semantic_min, semantic_max, 0.0, 1.0);
  }

 private:
  static Matrix map(const Matrix& x, const Matrix& lo, const Matrix& hi, double a, double b) {
    if (x.cols() != lo.cols())
      throw DimensionError("normalization: width " + std::to_string(x.cols()) + " vs record " +
                           std::to_string(lo.cols()));
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double span = hi(0, j) - lo(0, j);
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        out(i, j) = span == 0.0 ? 0.0 : a + (b - a) * (x(i, j) - lo(0, j)) / span;
    }
    return out;
  }
  static Matrix unmap(const Matrix& x, const Matrix& lo, const Matrix& hi, double a, double b) {
    if (x.cols() != lo.cols())
      throw DimensionError("normalization: width " + std::to_string(x.cols()) + " vs record " +
                           std::to_string(lo.cols()));
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double span = hi(0, j) - lo(0, j);
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        out(i, j) = span == 0.0 ? lo(0, j) : lo(0, j) + (x(i, j) - a) * span / (b - a);
    }
    return out;
  }
};

namespace detail {

inline double parse_double(std::string_view field, const std::string& file, std::size_t line) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw DataError(file + ": bad number '" + std::string(field) + "' at line " +
                    std::to_string(line));
  return v;
}

inline int parse_id(std::string_view field, const std::string& file, std::size_t line) {
  const double v = parse_double(field, file, line);
  if (v != static_cast<double>(static_cast<long long>(v)) || v < 0 || v > 2147483647.0)
    throw DataError(file + ": bad id '" + std::string(field) + "' at line " + std::to_string(line));
  return static_cast<int>(v);
}

// Rows of `id,x_1,...,x_width`; blank lines ignored.
struct CsvRows {
  std::vector<int> ids;
  Matrix values;
};

inline CsvRows read_id_rows(const std::filesystem::path& path, Eigen::Index width) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());
  const std::string name = path.filename().string();
  std::vector<int> ids;
  std::vector<double> flat;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(text);
    for (;;) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<Eigen::Index>(fields.size()) != width + 1)
      throw DataError(name + ": row width mismatch at line " + std::to_string(line) +
                      " (expected " + std::to_string(width) + " values, got " +
                      std::to_string(fields.size() - 1) + ")");
    ids.push_back(parse_id(fields[0], name, line));
    for (std::size_t k = 1; k < fields.size(); ++k) flat.push_back(parse_double(fields[k], name, line));
  }
  CsvRows rows;
  rows.ids = std::move(ids);
  rows.values.resize(static_cast<Eigen::Index>(rows.ids.size()), width);
  std::copy(flat.begin(), flat.end(), rows.values.data());
  return rows;
}

}  // namespace detail

// Checks the split against the dataset; throws DataError on the first violation.
inline void validate(const Dataset& ds, const SplitSpec& split) {
  const auto n_classes = static_cast<int>(ds.num_classes());
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] < 0 || ds.labels[i] >= n_classes)
      throw DataError("label out of range: instance " + std::to_string(i) + " has label " +
                      std::to_string(ds.labels[i]) + " but there are " +
                      std::to_string(n_classes) + " classes");
  std::set<int> seen, unseen;
  for (int c : split.seen)
    if (!seen.insert(c).second)
      throw DataError("split: seen class " + std::to_string(c) + " listed twice");
  for (int c : split.unseen) {
    if (seen.count(c))
      throw DataError("overlapping split: class " + std::to_string(c) +
                      " is both seen and unseen");
    if (!unseen.insert(c).second)
      throw DataError("split: unseen class " + std::to_string(c) + " listed twice");
  }
  for (const auto* group : {&seen, &unseen})
    for (int c : *group)
      if (c < 0 || c >= n_classes)
        throw DataError("split: class " + std::to_string(c) + " out of range");
  auto check = [&](const std::vector<std::size_t>& ids, const std::set<int>& allowed,
                   const char* what) {
    for (std::size_t id : ids) {
      if (id >= ds.labels.size())
        throw DataError(std::string("split: ") + what + " instance " + std::to_string(id) +
                        " out of range");
      if (!allowed.count(ds.labels[id]))
        throw DataError(std::string("split: ") + what + " instance " + std::to_string(id) +
                        " has label " + std::to_string(ds.labels[id]) +
                        " outside its class set");
    }
  };
  check(split.train, seen, "train");
  check(split.test_seen, seen, "test_seen");
  check(split.test_unseen, unseen, "test_unseen");
}

struct Loaded {
  Dataset dataset;
  SplitSpec split;
};

// Reads manifest.json and the CSV/JSON files it references (paths relative to
// the manifest's directory).
inline Loaded load(const std::filesystem::path& manifest_path) {
  using nlohmann::json;
  std::ifstream in(manifest_path);
  if (!in) throw DataError("missing file: " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("manifest: " + std::string(e.what()));
  }
  const auto dir = manifest_path.parent_path();
  Loaded out;
  try {
    const auto d_v = m.at("d_v").get<Eigen::Index>();
    const auto d_s = m.at("d_s").get<Eigen::Index>();
    const auto n_classes = m.at("n_classes").get<int>();
    if (d_v < 1 || d_s < 1 || n_classes < 1) throw DataError("manifest: dimensions must be positive");
    out.dataset.class_names = m.at("class_names").get<std::vector<std::string>>();
    if (static_cast<int>(out.dataset.class_names.size()) != n_classes)
      throw DataError("manifest: " + std::to_string(out.dataset.class_names.size()) +
                      " class names for " + std::to_string(n_classes) + " classes");

    auto features = detail::read_id_rows(dir / m.at("features_csv").get<std::string>(), d_v);
    out.dataset.visual = std::move(features.values);
    out.dataset.labels = std::move(features.ids);

    auto attributes = detail::read_id_rows(dir / m.at("attributes_csv").get<std::string>(), d_s);
    if (static_cast<int>(attributes.ids.size()) != n_classes)
      throw DataError("attributes: " + std::to_string(attributes.ids.size()) + " rows for " +
                      std::to_string(n_classes) + " classes");
    out.dataset.semantic.resize(n_classes, d_s);
    std::vector<bool> filled(static_cast<std::size_t>(n_classes), false);
    for (std::size_t r = 0; r < attributes.ids.size(); ++r) {
      const int c = attributes.ids[r];
      if (c >= n_classes) throw DataError("attributes: class id " + std::to_string(c) + " out of range");
      if (filled[static_cast<std::size_t>(c)])
        throw DataError("attributes: class id " + std::to_string(c) + " repeated");
      filled[static_cast<std::size_t>(c)] = true;
      out.dataset.semantic.row(c) = attributes.values.row(static_cast<Eigen::Index>(r));
    }

    std::ifstream sin(dir / m.at("splits_json").get<std::string>());
    if (!sin) throw DataError("missing file: " + (dir / m.at("splits_json").get<std::string>()).string());
    json s = json::parse(sin);
    out.split.seen = s.at("seen").get<std::vector<int>>();
    out.split.unseen = s.at("unseen").get<std::vector<int>>();
    out.split.train = s.at("train").get<std::vector<std::size_t>>();
    out.split.test_seen = s.value("test_seen", std::vector<std::size_t>{});
    out.split.test_unseen = s.at("test_unseen").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw DataError("manifest/splits: " + std::string(e.what()));
  }
  validate(out.dataset, out.split);
  return out;
}

inline VisualPivots compute_pivots(const Dataset& ds, const SplitSpec& split) {
  VisualPivots vp;
  vp.class_ids = split.seen;
  vp.pivots = Matrix::Zero(static_cast<Eigen::Index>(split.seen.size()), ds.visual_width());
  vp.counts.assign(split.seen.size(), 0);
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(ds.num_classes()), -1);
  for (std::size_t k = 0; k < split.seen.size(); ++k)
    slot[static_cast<std::size_t>(split.seen[k])] = static_cast<Eigen::Index>(k);
  for (std::size_t id : split.train) {
    const Eigen::Index k = slot[static_cast<std::size_t>(ds.labels[id])];
    if (k < 0) continue;
    vp.pivots.row(k) += ds.visual.row(static_cast<Eigen::Index>(id));
    ++vp.counts[static_cast<std::size_t>(k)];
  }
  for (std::size_t k = 0; k < split.seen.size(); ++k) {
    if (vp.counts[k] == 0)
      throw DataError("seen class " + std::to_string(split.seen[k]) + " has no training instances");
    vp.pivots.row(static_cast<Eigen::Index>(k)) /= static_cast<double>(vp.counts[k]);
  }
  return vp;
}

struct Normalized {
  Dataset dataset;
  NormalizationRecord record;
};

inline Normalized normalize(const Dataset& ds, const SplitSpec& split) {
  if (split.train.empty()) throw DataError("normalize: empty train set");
  NormalizationRecord rec;
  const Eigen::Index dv = ds.visual_width();
  rec.visual_min = Matrix::Constant(1, dv, std::numeric_limits<double>::infinity());
  rec.visual_max = Matrix::Constant(1, dv, -std::numeric_limits<double>::infinity());
  for (std::size_t id : split.train) {
    const auto r = ds.visual.row(static_cast<Eigen::Index>(id));
    rec.visual_min = rec.visual_min.cwiseMin(r);
    rec.visual_max = rec.visual_max.cwiseMax(r);
  }
  rec.semantic_min = ds.semantic.colwise().minCoeff();
  rec.semantic_max = ds.semantic.colwise().maxCoeff();
  for (Eigen::Index j = 0; j < dv; ++j)
    if (rec.visual_min(0, j) == rec.visual_max(0, j)) rec.constant_visual_dims.push_back(j);
  for (Eigen::Index j = 0; j < ds.semantic_width(); ++j)
    if (rec.semantic_min(0, j) == rec.semantic_max(0, j)) rec.constant_semantic_dims.push_back(j);

  Normalized out;
  out.dataset = ds;
  out.dataset.visual = rec.apply_visual(ds.visual);
  out.dataset.semantic = rec.apply_semantic(ds.semantic);
  out.record = std::move(rec);
  return out;
}

struct Batch {
  Matrix visual;    // m x d_v
  Matrix semantic;  // m x d_s
  std::vector<int> class_ids;
  std::vector<std::size_t> instances;
};

// Uniform sampling with replacement over the training instances.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, const SplitSpec& split) : ds_(&ds), train_(split.train) {
    if (train_.empty()) throw DataError("batches: empty train set");
  }

  template <typename Rng>
  Batch sample(std::size_t m, Rng& rng) const {
    if (m < 1) throw DataError("batches: batch size must be >= 1");
    std::uniform_int_distribution<std::size_t> pick(0, train_.size() - 1);
    Batch b;
    const auto rows = static_cast<Eigen::Index>(m);
    b.visual.resize(rows, ds_->visual_width());
    b.semantic.resize(rows, ds_->semantic_width());
    b.class_ids.resize(m);
    b.instances.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t id = train_[pick(rng)];
      const int c = ds_->labels[id];
      b.instances[i] = id;
      b.class_ids[i] = c;
      b.visual.row(static_cast<Eigen::Index>(i)) = ds_->visual.row(static_cast<Eigen::Index>(id));
      b.semantic.row(static_cast<Eigen::Index>(i)) = ds_->semantic.row(c);
    }
    return b;
  }

 private:
  const Dataset* ds_;
  std::vector<std::size_t> train_;
};

}  // namespace srgan::data

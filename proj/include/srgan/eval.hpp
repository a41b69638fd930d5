#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "srgan/trainer.hpp"

namespace srgan {

// Representative feature per candidate class, one row per entry of class_ids.
struct CentroidTable {
  std::vector<int> class_ids;
  data::Matrix centroids;
};

enum class Metric { euclidean, cosine };

enum class Classifier { nearest_centroid, disc_head };

struct EvalConfig {
  std::string mode = "zsl";  // zsl | gzsl
  int n_per_class = 300;
  std::uint64_t seed = 0;
  Metric metric = Metric::euclidean;
  Classifier classifier = Classifier::nearest_centroid;
};

struct ClassAccuracy {
  int class_id = 0;
  double acc = 0;
  std::size_t n = 0;
};

struct EvalReport {
  std::string mode;
  std::optional<double> T1, U, S, H;
  std::vector<ClassAccuracy> per_class;
  EvalConfig config;
};

// Features for one class: n rows of width d_v.
using Synthesizer = std::function<data::Matrix(int class_id, int n)>;

inline std::mt19937_64 class_stream(std::uint64_t seed, int class_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(class_id)};
  return std::mt19937_64(seq);
}

// n draws of G(s_c, R(s_c), z) for class c, with z from a stream keyed by
// (seed, c) so that every class is reproducible on its own.
template <typename T>
data::Matrix synthesize_class(const ModelBundle<T>& b, const data::Dataset& ds, int class_id, int n,
                              std::uint64_t seed) {
  if (class_id < 0 || class_id >= ds.num_classes())
    throw DataError("synthesize: unknown class id " + std::to_string(class_id));
  if (n < 1) throw DataError("synthesize: n_per_class must be >= 1");
  if (ds.semantic_width() != b.shape.d_s)
    throw DimensionError("synthesize: semantic width " + std::to_string(ds.semantic_width()) +
                         " but the model expects " + std::to_string(b.shape.d_s));
  const nd::Tensor<T> s = ds.semantic.row(class_id).template cast<T>();
  const nd::Tensor<T> r = b.rectified(s);
  auto rng = class_stream(seed, class_id);
  const nd::Tensor<T> z = detail::normal_noise<T>(n, b.shape.d_z, rng);
  return generate(b.gen, repeat_rows(s, n), repeat_rows(r, n), z).template cast<double>();
}

struct SyntheticSet {
  data::Matrix features;
  std::vector<int> labels;
};

template <typename T>
SyntheticSet synthesize(const ModelBundle<T>& b, const data::Dataset& ds, std::span<const int> classes,
                        int n_per_class, std::uint64_t seed) {
  SyntheticSet out;
  out.features.resize(static_cast<Eigen::Index>(classes.size()) * n_per_class, b.shape.d_v);
  Eigen::Index row = 0;
  for (int c : classes) {
    out.features.middleRows(row, n_per_class) = synthesize_class(b, ds, c, n_per_class, seed);
    out.labels.insert(out.labels.end(), static_cast<std::size_t>(n_per_class), c);
    row += n_per_class;
  }
  return out;
}

template <typename T>
Synthesizer generator_synthesizer(const ModelBundle<T>& b, const data::Dataset& ds, std::uint64_t seed) {
  return [&b, &ds, seed](int c, int n) { return synthesize_class(b, ds, c, n, seed); };
}

inline CentroidTable synthetic_centroids(const Synthesizer& synth, std::span<const int> classes,
                                         int n_per_class) {
  CentroidTable t;
  for (int c : classes) {
    const data::Matrix f = synth(c, n_per_class);
    if (f.rows() == 0) throw DataError("synthesize: no features for class " + std::to_string(c));
    if (t.class_ids.empty()) t.centroids.resize(static_cast<Eigen::Index>(classes.size()), f.cols());
    if (f.cols() != t.centroids.cols())
      throw DimensionError("synthesize: class " + std::to_string(c) + " has width " +
                           std::to_string(f.cols()));
    t.centroids.row(static_cast<Eigen::Index>(t.class_ids.size())) = f.colwise().mean();
    t.class_ids.push_back(c);
  }
  return t;
}

inline double distance(const Eigen::Ref<const data::Matrix>& a, const Eigen::Ref<const data::Matrix>& b,
                       Metric metric) {
  if (metric == Metric::euclidean) return (a - b).norm();
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) throw NumericError("cosine distance: zero-norm vector");
  return 1.0 - (a.array() * b.array()).sum() / (na * nb);
}

// argmin distance per query row; ties go to the smallest class id.
inline std::vector<int> classify_nearest_centroid(const data::Matrix& queries, const CentroidTable& table,
                                                  Metric metric = Metric::euclidean) {
  if (table.class_ids.empty()) throw DataError("classify: empty centroid table");
  if (table.centroids.rows() != static_cast<Eigen::Index>(table.class_ids.size()))
    throw DimensionError("classify: centroid rows do not match class ids");
  if (queries.cols() != table.centroids.cols())
    throw DimensionError("classify: query width " + std::to_string(queries.cols()) +
                         " but centroid width " + std::to_string(table.centroids.cols()));
  std::vector<int> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_id = std::numeric_limits<int>::max();
    for (std::size_t k = 0; k < table.class_ids.size(); ++k) {
      const double d = distance(queries.row(i), table.centroids.row(static_cast<Eigen::Index>(k)), metric);
      const int id = table.class_ids[k];
      if (d < best || (d == best && id < best_id)) {
        best = d;
        best_id = id;
      }
    }
    out[static_cast<std::size_t>(i)] = best_id;
  }
  return out;
}

// argmax of D's classification logits restricted to `candidates`.
template <typename T>
std::vector<int> classify_disc_head(const ModelBundle<T>& b, const data::Matrix& queries,
                                    std::span<const int> candidates) {
  std::vector<Eigen::Index> cols;
  for (int c : candidates) {
    auto it = std::find(b.head_classes.begin(), b.head_classes.end(), c);
    if (it == b.head_classes.end())
      throw DataError("classify: class " + std::to_string(c) +
                      " has no logit in the discriminator head (train with head = all)");
    cols.push_back(it - b.head_classes.begin());
  }
  nd::Graph<T> g;
  const nd::Tensor<T> logits =
      critic_and_classify(b.disc, g.constant(queries.template cast<T>()), false).logits.value();
  std::vector<int> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < cols.size(); ++k)
      if (logits(i, cols[k]) > logits(i, cols[best]) ||
          (logits(i, cols[k]) == logits(i, cols[best]) && candidates[k] < candidates[best]))
        best = k;
    out[static_cast<std::size_t>(i)] = candidates[best];
  }
  return out;
}

// Macro average of per-class accuracy, in percent.
inline double per_class_top1(std::span<const int> predicted, std::span<const int> truth,
                             std::span<const int> classes, std::vector<ClassAccuracy>* table = nullptr) {
  if (predicted.size() != truth.size())
    throw DimensionError("per_class_top1: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
  if (classes.empty()) throw DataError("per_class_top1: empty class set");
  std::vector<std::size_t> correct(classes.size(), 0), total(classes.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto it = std::find(classes.begin(), classes.end(), truth[i]);
    if (it == classes.end())
      throw DataError("per_class_top1: label " + std::to_string(truth[i]) + " is not in the class set");
    const auto k = static_cast<std::size_t>(it - classes.begin());
    ++total[k];
    if (predicted[i] == truth[i]) ++correct[k];
  }
  double sum = 0;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (total[k] == 0)
      throw DataError("per_class_top1: class " + std::to_string(classes[k]) + " has no test instances");
    const double acc = 100.0 * static_cast<double>(correct[k]) / static_cast<double>(total[k]);
    if (table) table->push_back({classes[k], acc, total[k]});
    sum += acc;
  }
  return sum / static_cast<double>(classes.size());
}

inline double harmonic(double u, double s) {
  if (!(u >= 0 && s >= 0)) throw DataError("harmonic: accuracies must be non-negative");
  if (u == 0 && s == 0) throw DataError("harmonic: U and S are both zero");
  return 2.0 * s * u / (s + u);
}

namespace detail {

inline data::Matrix gather(const data::Dataset& ds, const std::vector<std::size_t>& idx,
                           std::vector<int>& labels) {
  data::Matrix out(static_cast<Eigen::Index>(idx.size()), ds.visual_width());
  labels.clear();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = ds.visual.row(static_cast<Eigen::Index>(idx[i]));
    labels.push_back(ds.labels[idx[i]]);
  }
  return out;
}

}  // namespace detail

// Classifies test_unseen against the unseen candidates in `table`.
inline EvalReport evaluate_zsl(const data::Dataset& ds, const data::SplitSpec& split,
                               const CentroidTable& table, const EvalConfig& cfg) {
  std::vector<int> truth;
  const data::Matrix q = detail::gather(ds, split.test_unseen, truth);
  const std::vector<int> pred = classify_nearest_centroid(q, table, cfg.metric);
  EvalReport r;
  r.mode = "zsl";
  r.config = cfg;
  r.T1 = per_class_top1(pred, truth, split.unseen, &r.per_class);
  return r;
}

// Classifies test_seen and test_unseen over the joint candidate set in `table`.
inline EvalReport evaluate_gzsl(const data::Dataset& ds, const data::SplitSpec& split,
                                const CentroidTable& table, const EvalConfig& cfg) {
  EvalReport r;
  r.mode = "gzsl";
  r.config = cfg;
  std::vector<int> truth;
  data::Matrix q = detail::gather(ds, split.test_unseen, truth);
  r.U = per_class_top1(classify_nearest_centroid(q, table, cfg.metric), truth, split.unseen, &r.per_class);
  q = detail::gather(ds, split.test_seen, truth);
  r.S = per_class_top1(classify_nearest_centroid(q, table, cfg.metric), truth, split.seen, &r.per_class);
  r.H = harmonic(*r.U, *r.S);
  return r;
}

// GZSL candidates: synthetic centroids for unseen classes, real training pivots
// for seen classes.
inline CentroidTable gzsl_centroids(const data::Dataset& ds, const data::SplitSpec& split,
                                    const Synthesizer& synth, int n_per_class) {
  CentroidTable t = synthetic_centroids(synth, split.unseen, n_per_class);
  const data::VisualPivots vp = data::compute_pivots(ds, split);
  const Eigen::Index nu = t.centroids.rows();
  t.centroids.conservativeResize(nu + vp.pivots.rows(), ds.visual_width());
  t.centroids.bottomRows(vp.pivots.rows()) = vp.pivots;
  t.class_ids.insert(t.class_ids.end(), vp.class_ids.begin(), vp.class_ids.end());
  return t;
}

inline EvalReport run_zsl(const data::Dataset& ds, const data::SplitSpec& split, const EvalConfig& cfg,
                          const Synthesizer& synth) {
  return evaluate_zsl(ds, split, synthetic_centroids(synth, split.unseen, cfg.n_per_class), cfg);
}

inline EvalReport run_gzsl(const data::Dataset& ds, const data::SplitSpec& split, const EvalConfig& cfg,
                           const Synthesizer& synth) {
  return evaluate_gzsl(ds, split, gzsl_centroids(ds, split, synth, cfg.n_per_class), cfg);
}

namespace detail {

template <typename T>
EvalReport run_disc_head(const ModelBundle<T>& b, const data::Dataset& ds, const data::SplitSpec& split,
                         const EvalConfig& cfg, bool gzsl) {
  EvalReport r;
  r.mode = gzsl ? "gzsl" : "zsl";
  r.config = cfg;
  std::vector<int> candidates = split.unseen;
  if (gzsl) candidates.insert(candidates.end(), split.seen.begin(), split.seen.end());
  std::vector<int> truth;
  data::Matrix q = gather(ds, split.test_unseen, truth);
  const double u = per_class_top1(classify_disc_head(b, q, candidates), truth, split.unseen, &r.per_class);
  if (!gzsl) {
    r.T1 = u;
    return r;
  }
  r.U = u;
  q = gather(ds, split.test_seen, truth);
  r.S = per_class_top1(classify_disc_head(b, q, candidates), truth, split.seen, &r.per_class);
  r.H = harmonic(*r.U, *r.S);
  return r;
}

}  // namespace detail

// `ds` must be normalized the same way as for training.
template <typename T>
EvalReport run_zsl(const ModelBundle<T>& b, const data::Dataset& ds, const data::SplitSpec& split,
                   const EvalConfig& cfg) {
  if (cfg.classifier == Classifier::disc_head) return detail::run_disc_head(b, ds, split, cfg, false);
  return run_zsl(ds, split, cfg, generator_synthesizer(b, ds, cfg.seed));
}

template <typename T>
EvalReport run_gzsl(const ModelBundle<T>& b, const data::Dataset& ds, const data::SplitSpec& split,
                    const EvalConfig& cfg) {
  if (cfg.classifier == Classifier::disc_head) return detail::run_disc_head(b, ds, split, cfg, true);
  return run_gzsl(ds, split, cfg, generator_synthesizer(b, ds, cfg.seed));
}

inline const char* to_string(Metric m) { return m == Metric::euclidean ? "euclidean" : "cosine"; }
inline const char* to_string(Classifier c) {
  return c == Classifier::nearest_centroid ? "nearest_centroid" : "disc_head";
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["mode"] = r.mode;
  if (r.T1) j["T1"] = *r.T1;
  if (r.U) j["U"] = *r.U;
  if (r.S) j["S"] = *r.S;
  if (r.H) j["H"] = *r.H;
  j["per_class"] = nlohmann::json::array();
  for (const auto& c : r.per_class) j["per_class"].push_back({{"class_id", c.class_id}, {"acc", c.acc}, {"n", c.n}});
  j["config"] = {{"mode", r.config.mode},
                 {"n_per_class", r.config.n_per_class},
                 {"seed", r.config.seed},
                 {"metric", to_string(r.config.metric)},
                 {"classifier", to_string(r.config.classifier)}};
  return j;
}

}  // namespace srgan

#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "srgan/data/dataset.hpp"

namespace srgan::data {

// Synthetic task with binary class attributes and visual clusters whose means
// are a non-negative, column-orthonormal embedding of the attributes, so
// attribute cosines equal mean cosines. Instances are the class mean with
// each dimension independently occluded (pushed down by a fixed depth) with a
// small probability. The depth is chosen so that min-max normalization of the
// train features sends inactive dimensions of a pivot to ~0 and active ones to
// a common positive level, which keeps the pivot cosine structure intact in
// normalized space. Consecutive class pairs
// within the seen and within the unseen group are "confusable": their
// semantic rows are pulled toward their midpoint by `overlap` while their
// visual means stay where the attributes put them.
struct ToyConfig {
  std::uint64_t seed = 1;
  int n_seen = 10;
  int n_unseen = 5;
  Eigen::Index d_v = 32;
  Eigen::Index d_s = 16;
  double overlap = 0.3;
  int per_class = 100;
  double occlusion = 0.05;      // per-dimension probability that an instance is pushed below the class mean
  double density = 0.3;         // probability that an attribute is active
  double train_fraction = 0.8;  // share of each seen class used for training
};

struct ToyInfo {
  std::filesystem::path manifest;
  std::vector<std::pair<int, int>> confusable;
  Dataset dataset;  // exactly what was written
  SplitSpec split;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void write_rows(const std::filesystem::path& path, const std::vector<int>& ids,
                       const Matrix& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << ',' << format_double(values(i, j));
    out << '\n';
  }
}

}  // namespace detail

inline ToyInfo gen_toy(const ToyConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.n_seen < 2 || cfg.n_unseen < 1) throw DataError("gen_toy: need n_seen >= 2 and n_unseen >= 1");
  if (cfg.d_v < 1 || cfg.d_s < 2) throw DataError("gen_toy: need d_v >= 1 and d_s >= 2");
  if (cfg.per_class < 2) throw DataError("gen_toy: need per_class >= 2");
  if (!(cfg.overlap >= 0.0 && cfg.overlap <= 1.0)) throw DataError("gen_toy: overlap must lie in [0, 1]");
  if (!(cfg.density > 0.0 && cfg.density < 1.0)) throw DataError("gen_toy: density must lie in (0, 1)");
  if (!(cfg.occlusion > 0.0 && cfg.occlusion < 0.5))
    throw DataError("gen_toy: occlusion must lie in (0, 0.5)");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw DataError("gen_toy: train_fraction must lie in (0, 1)");

  const int n_classes = cfg.n_seen + cfg.n_unseen;
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::pair<int, int>> confusable;
  for (int c = 0; c + 1 < cfg.n_seen; c += 2) confusable.emplace_back(c, c + 1);
  for (int c = cfg.n_seen; c + 1 < n_classes; c += 2) confusable.emplace_back(c, c + 1);

  // Binary attributes: distinct rows, every attribute both on and off among
  // the seen classes, confusable pairs with attribute cosine < 0.5.
  std::bernoulli_distribution bit(cfg.density);
  Matrix attrs(n_classes, cfg.d_s);
  auto acceptable = [&]() {
    for (int c = 0; c < n_classes; ++c) {
      if (attrs.row(c).sum() < 1) return false;
      for (int d = 0; d < c; ++d)
        if (attrs.row(c) == attrs.row(d)) return false;
    }
    for (Eigen::Index k = 0; k < cfg.d_s; ++k) {
      const double on = attrs.col(k).head(cfg.n_seen).sum();
      if (on < 1 || on > cfg.n_seen - 1) return false;
    }
    for (auto [i, j] : confusable)
      if (nd::cosine<double>(attrs.row(i), attrs.row(j)) >= 0.5) return false;
    return true;
  };
  int attempts = 0;
  do {
    if (++attempts > 100000) throw DataError("gen_toy: could not draw a valid attribute table");
    for (Eigen::Index i = 0; i < attrs.size(); ++i) attrs.data()[i] = bit(rng) ? 1.0 : 0.0;
  } while (!acceptable());

  // Embedding with disjoint non-negative supports: visual dim j carries attribute j mod d_s.
  std::uniform_real_distribution<double> weight(0.5, 1.5);
  Matrix embed = Matrix::Zero(cfg.d_v, cfg.d_s);
  for (Eigen::Index j = 0; j < cfg.d_v; ++j) embed(j, j % cfg.d_s) = weight(rng);
  for (Eigen::Index k = 0; k < cfg.d_s; ++k) {
    const double n = embed.col(k).norm();
    if (n > 0) embed.col(k) /= n;
  }
  const Matrix means = attrs * embed.transpose();  // C x d_v
  const Eigen::VectorXd scale = embed.rowwise().sum();

  Matrix semantic = attrs;
  for (auto [i, j] : confusable) {
    const Eigen::RowVectorXd mid = 0.5 * (attrs.row(i) + attrs.row(j));
    semantic.row(i) = attrs.row(i) + cfg.overlap * (mid - attrs.row(i));
    semantic.row(j) = attrs.row(j) + cfg.overlap * (mid - attrs.row(j));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution occlude(cfg.occlusion);
  // With active level w and depth d*w, the train range of a dimension is
  // [-d*w, w] and an inactive pivot sits at -q*d*w; it lands on the midpoint
  // when d = 1 / (1 - 2q).
  const double depth = 1.0 / (1.0 - 2.0 * cfg.occlusion);
  const int n_total = n_classes * cfg.per_class;
  Matrix visual(n_total, cfg.d_v);
  std::vector<int> labels(static_cast<std::size_t>(n_total));
  nlohmann::json splits;
  std::vector<int> seen, unseen;
  std::vector<std::size_t> train, test_seen, test_unseen;
  const int n_train =
      std::max(1, std::min(cfg.per_class - 1,
                           static_cast<int>(std::lround(cfg.train_fraction * cfg.per_class))));
  for (int c = 0; c < n_classes; ++c) {
    (c < cfg.n_seen ? seen : unseen).push_back(c);
    for (int k = 0; k < cfg.per_class; ++k) {
      const int id = c * cfg.per_class + k;
      labels[static_cast<std::size_t>(id)] = c;
      for (Eigen::Index j = 0; j < cfg.d_v; ++j)
        visual(id, j) = means(c, j) - (occlude(rng) ? depth * scale(j) : 0.0);
      const auto sid = static_cast<std::size_t>(id);
      if (c >= cfg.n_seen)
        test_unseen.push_back(sid);
      else if (k < n_train)
        train.push_back(sid);
      else
        test_seen.push_back(sid);
    }
  }

  std::filesystem::create_directories(out_dir);
  std::vector<int> class_ids(static_cast<std::size_t>(n_classes));
  std::vector<std::string> names;
  for (int c = 0; c < n_classes; ++c) {
    class_ids[static_cast<std::size_t>(c)] = c;
    names.push_back((c < 10 ? "class_0" : "class_") + std::to_string(c));
  }
  detail::write_rows(out_dir / "features.csv", labels, visual);
  detail::write_rows(out_dir / "attributes.csv", class_ids, semantic);

  splits["seen"] = seen;
  splits["unseen"] = unseen;
  splits["train"] = train;
  splits["test_seen"] = test_seen;
  splits["test_unseen"] = test_unseen;
  std::ofstream(out_dir / "splits.json", std::ios::binary) << splits.dump() << '\n';

  nlohmann::json manifest;
  manifest["features_csv"] = "features.csv";
  manifest["attributes_csv"] = "attributes.csv";
  manifest["splits_json"] = "splits.json";
  manifest["d_v"] = cfg.d_v;
  manifest["d_s"] = cfg.d_s;
  manifest["n_classes"] = n_classes;
  manifest["class_names"] = names;
  std::ofstream(out_dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';

  nlohmann::json toy;
  toy["seed"] = cfg.seed;
  toy["overlap"] = cfg.overlap;
  toy["occlusion"] = cfg.occlusion;
  toy["density"] = cfg.density;
  toy["confusable"] = confusable;
  std::ofstream(out_dir / "toy.json", std::ios::binary) << toy.dump(2) << '\n';

  ToyInfo info;
  info.manifest = out_dir / "manifest.json";
  info.confusable = std::move(confusable);
  info.dataset.visual = std::move(visual);
  info.dataset.semantic = std::move(semantic);
  info.dataset.labels = std::move(labels);
  info.dataset.class_names = std::move(names);
  info.split = SplitSpec{seen, unseen, train, test_seen, test_unseen};
  return info;
}

// Confusable pairs recorded by gen_toy next to a manifest, empty if absent.
inline std::vector<std::pair<int, int>> read_confusable(const std::filesystem::path& manifest) {
  std::ifstream in(manifest.parent_path() / "toy.json");
  if (!in) return {};
  auto j = nlohmann::json::parse(in);
  return j.at("confusable").get<std::vector<std::pair<int, int>>>();
}

}  // namespace srgan::data

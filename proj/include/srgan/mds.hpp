#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "srgan/srn.hpp"

namespace srgan::mds {

using data::Matrix;

struct EigenPairs {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k belongs to values[k]
};

// Cyclic Jacobi rotations on a symmetric matrix. Stops once the off-diagonal
// Frobenius norm falls below tol times the norm of the input.
inline EigenPairs jacobi_eigen(Matrix a, double tol = 1e-10, int max_sweeps = 100) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw DimensionError("jacobi_eigen: matrix is " + nd::shape_str(a));
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(a.norm(), 1e-300);
  auto off = [&] {
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) s += 2 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  for (int sweep = 0; sweep < max_sweeps && off() > tol * scale; ++sweep) {
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  EigenPairs out;
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values.push_back(a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]));
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

struct EmbeddingResult {
  Matrix coords;  // n x k, centered
  std::vector<std::string> names;
  std::string space;  // semantic | rectified | pivot
  double stress = 0;
};

inline Matrix euclidean_distances(const Matrix& x) {
  Matrix d(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  return d;
}

// Kruskal stress-1 between input distances and distances of the embedding.
inline double stress(const Matrix& dist, const Matrix& coords) {
  const Matrix e = euclidean_distances(coords);
  const double den = dist.squaredNorm();
  return den == 0 ? std::sqrt((dist - e).squaredNorm()) : std::sqrt((dist - e).squaredNorm() / den);
}

// Torgerson scaling: B = -1/2 J D^2 J, top-k eigenpairs with positive
// eigenvalues, coordinates = vectors * sqrt(values). Axes are flipped so the
// first entry that is not numerically zero is positive.
inline EmbeddingResult classical_mds(const Matrix& dist, Eigen::Index k = 2) {
  const Eigen::Index n = dist.rows();
  if (dist.cols() != n) throw DimensionError("classical_mds: distance matrix is " + nd::shape_str(dist));
  if (k < 1) throw DimensionError("classical_mds: k must be >= 1");
  const double tol = 1e-12 * std::max(1.0, dist.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::isfinite(dist(i, j))) throw NumericError("classical_mds: non-finite distance");
      if (dist(i, j) < 0) throw DataError("classical_mds: negative distance");
      if (std::abs(dist(i, j) - dist(j, i)) > tol) throw DataError("classical_mds: distance matrix is not symmetric");
    }
  EmbeddingResult r;
  r.coords = Matrix::Zero(n, k);
  if (n == 0) return r;
  const Matrix j = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  Matrix b = -0.5 * j * dist.cwiseProduct(dist) * j;
  b = 0.5 * (b + b.transpose()).eval();
  const EigenPairs eig = jacobi_eigen(b);
  const double floor = 1e-12 * std::max(1.0, std::abs(eig.values.front()));
  for (Eigen::Index a = 0; a < std::min(k, n); ++a) {
    const double lam = eig.values[static_cast<std::size_t>(a)];
    if (lam <= floor) break;
    r.coords.col(a) = eig.vectors.col(a) * std::sqrt(lam);
  }
  for (Eigen::Index a = 0; a < k; ++a) {
    r.coords.col(a).array() -= r.coords.col(a).mean();
    const double big = r.coords.col(a).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(r.coords(i, a)) > 1e-9 * big) {
        if (r.coords(i, a) < 0) r.coords.col(a) *= -1;
        break;
      }
  }
  r.stress = stress(dist, r.coords);
  return r;
}

struct Diagnostic {
  std::vector<int> class_ids;
  EmbeddingResult semantic, rectified, pivot;
};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v == 0 ? 0.0 : v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string coords_csv(const Diagnostic& d) {
  std::string out = "space,class_id,class_name,x,y\n";
  for (const EmbeddingResult* e : {&d.semantic, &d.rectified, &d.pivot})
    for (std::size_t i = 0; i < d.class_ids.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      out += e->space + "," + std::to_string(d.class_ids[i]) + "," + csv_field(e->names[i]) + "," +
             fmt(e->coords(r, 0)) + "," + fmt(e->coords.cols() > 1 ? e->coords(r, 1) : 0.0) + "\n";
    }
  return out;
}

// 800x800 canvas: one panel per space in a 2x2 grid, the fourth cell holds the legend.
inline std::string scatter_svg(const Diagnostic& d) {
  struct Panel {
    const EmbeddingResult* e;
    const char* color;
    double x0, y0;
  };
  const Panel panels[] = {{&d.semantic, "#1f77b4", 0, 0}, {&d.rectified, "#d62728", 400, 0}, {&d.pivot, "#2ca02c", 0, 400}};
  std::string s =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">\n"
      "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
  for (const auto& p : panels) {
    const Matrix& c = p.e->coords;
    double lim = 1e-12;
    for (Eigen::Index i = 0; i < c.rows(); ++i)
      for (Eigen::Index a = 0; a < std::min<Eigen::Index>(2, c.cols()); ++a) lim = std::max(lim, std::abs(c(i, a)));
    const double half = 150.0 / lim;
    const double cx = p.x0 + 200, cy = p.y0 + 210;
    s += "<rect x=\"" + fmt(p.x0 + 10) + "\" y=\"" + fmt(p.y0 + 10) +
         "\" width=\"380\" height=\"380\" fill=\"none\" stroke=\"#999\"/>\n";
    s += "<text x=\"" + fmt(p.x0 + 20) + "\" y=\"" + fmt(p.y0 + 30) + "\" font-family=\"sans-serif\" font-size=\"14\">" +
         p.e->space + " (stress " + fmt(p.e->stress) + ")</text>\n";
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      const double x = cx + half * c(i, 0);
      const double y = cy - half * (c.cols() > 1 ? c(i, 1) : 0.0);
      s += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"4\" fill=\"" + p.color + "\"/>\n";
      s += "<text x=\"" + fmt(x + 6) + "\" y=\"" + fmt(y - 6) + "\" font-family=\"sans-serif\" font-size=\"10\">" +
           xml_escape(p.e->names[static_cast<std::size_t>(i)]) + "</text>\n";
    }
  }
  double ly = 440;
  for (const auto& p : panels) {
    s += "<circle cx=\"430\" cy=\"" + fmt(ly) + "\" r=\"5\" fill=\"" + p.color + "\"/>\n";
    s += "<text x=\"445\" y=\"" + fmt(ly + 4) + "\" font-family=\"sans-serif\" font-size=\"14\">" + p.e->space +
         "</text>\n";
    ly += 24;
  }
  return s + "</svg>\n";
}

// Separate embeddings of the seen-class semantic rows, their rectified rows and
// the visual pivots. `ds` is the normalized dataset the SRN was trained on.
inline Diagnostic build_diagnostic(const data::Dataset& ds, const data::SplitSpec& split,
                                   const std::function<Matrix(const Matrix&)>& rectify_rows) {
  const data::VisualPivots vp = data::compute_pivots(ds, split);
  const Matrix sem = seen_semantics(ds, vp);
  const Matrix rect = rectify_rows(sem);
  Diagnostic d;
  d.class_ids = vp.class_ids;
  std::vector<std::string> names;
  for (int c : vp.class_ids) names.push_back(ds.class_names[static_cast<std::size_t>(c)]);
  auto embed = [&](const Matrix& x, const char* space) {
    EmbeddingResult e = classical_mds(euclidean_distances(x));
    e.names = names;
    e.space = space;
    return e;
  };
  d.semantic = embed(sem, "semantic");
  d.rectified = embed(rect, "rectified");
  d.pivot = embed(vp.pivots, "pivot");
  return d;
}

template <typename T>
Diagnostic build_diagnostic(const data::Dataset& ds, const data::SplitSpec& split, const SrnParams<T>& srn) {
  return build_diagnostic(ds, split, [&](const Matrix& s) {
    return Matrix(rectify(srn, s.template cast<T>()).template cast<double>());
  });
}

inline void write_diagnostic(const Diagnostic& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << text;
  };
  put("coords.csv", coords_csv(d));
  put("plot.svg", scatter_svg(d));
}

// Smallest 2-D distance between the members of any listed class pair present in the embedding.
inline double min_pair_distance(const Diagnostic& d, const EmbeddingResult& e,
                                const std::vector<std::pair<int, int>>& pairs) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : pairs) {
    auto ia = std::find(d.class_ids.begin(), d.class_ids.end(), a);
    auto ib = std::find(d.class_ids.begin(), d.class_ids.end(), b);
    if (ia == d.class_ids.end() || ib == d.class_ids.end()) continue;
    best = std::min(best, (e.coords.row(ia - d.class_ids.begin()) - e.coords.row(ib - d.class_ids.begin())).norm());
  }
  return best;
}

}  // namespace srgan::mds

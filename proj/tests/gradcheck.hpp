#pragma once

// Central finite-difference oracle. It only evaluates losses forward, so it
// stays independent of the reverse-mode path it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "srgan/ndgrad/graph.hpp"

namespace testing_util {

using srgan::nd::Graph;
using srgan::nd::Tensor;
using srgan::nd::Var;

using LossBuilder = std::function<Var<double>(Graph<double>&)>;

struct GradCheck {
  double rel_error = 0;
  double analytic_norm = 0;
  double numeric_norm = 0;
};

inline double loss_value(const LossBuilder& build) {
  Graph<double> g;
  return build(g).value()(0, 0);
}

// Compares d(loss)/d(tensor) for every tensor in `wrt` (bound with g.param in
// `build`) against central differences with step h. Error is measured on the
// concatenation of all gradients: |a - f| / max(|a|, |f|, floor).
inline GradCheck check_gradients_at(const std::vector<Tensor<double>*>& wrt,
                                    const LossBuilder& build, double h, double floor = 1e-7) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    Var<double> loss = build(g);
    g.backward(loss);
    for (auto* t : wrt) analytic.push_back(g.grad_of(*t));
  }
  double diff2 = 0, a2 = 0, f2 = 0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor<double>& t = *wrt[k];
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double up = loss_value(build);
      t.data()[i] = saved - h;
      const double down = loss_value(build);
      t.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = analytic[k].data()[i];
      diff2 += (an - fd) * (an - fd);
      a2 += an * an;
      f2 += fd * fd;
    }
  }
  GradCheck r;
  r.analytic_norm = std::sqrt(a2);
  r.numeric_norm = std::sqrt(f2);
  r.rel_error = std::sqrt(diff2) / std::max({r.analytic_norm, r.numeric_norm, floor});
  return r;
}

// Piecewise-linear losses have kinks; a stencil of width 2h that straddles one
// is not a derivative estimate. When the step-h check exceeds `tol`, the
// check is repeated with h/10 and the better result is reported.
inline GradCheck check_gradients(const std::vector<Tensor<double>*>& wrt, const LossBuilder& build,
                                 double h = 1e-5, double tol = 1e-4) {
  GradCheck r = check_gradients_at(wrt, build, h);
  if (r.rel_error < tol) return r;
  GradCheck fine = check_gradients_at(wrt, build, h / 10);
  return fine.rel_error < r.rel_error ? fine : r;
}

inline Tensor<double> random_tensor(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                    double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

}  // namespace testing_util

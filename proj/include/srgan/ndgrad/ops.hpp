#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srgan/ndgrad/graph.hpp"

namespace srgan::nd {

inline constexpr double kLeakySlope = 0.2;

namespace detail {

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.graph() != &b.graph())
    throw GraphError(std::string(op) + ": operands belong to different graphs");
  require_same_shape(a.value(), b.value(), op);
}

template <typename T>
T sign(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

template <typename T>
Tensor<T> scalar(T v) {
  Tensor<T> s(1, 1);
  s(0, 0) = v;
  return s;
}

}  // namespace detail

// x (B x in) * W^T (in x out) + b (1 x out).
template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& X = x.value();
  const auto& W = w.value();
  const auto& Bv = b.value();
  if (X.cols() != W.cols())
    throw DimensionError("affine: input width " + std::to_string(X.cols()) +
                         " does not match weight " + shape_str(W));
  if (Bv.rows() != 1 || Bv.cols() != W.rows())
    throw DimensionError("affine: bias " + shape_str(Bv) + " does not match weight " +
                         shape_str(W));
  Tensor<T> y = X * W.transpose();
  y.rowwise() += Bv.row(0);
  return x.graph().record(
      "affine", std::move(y), {x, w, b},
      [x, w, b](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
        if (x.requires_grad()) g.accumulate(x, dy * w.value());
        if (w.requires_grad()) g.accumulate(w, dy.transpose() * x.value());
        if (b.requires_grad()) g.accumulate(b, dy.colwise().sum());
      });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(kLeakySlope)) {
  Tensor<T> y = x.value().unaryExpr([slope](T v) { return v > T(0) ? v : slope * v; });
  return x.graph().record("leaky_relu", std::move(y), {x},
                          [x, slope](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            Tensor<T> dx = dy.binaryExpr(x.value(), [slope](T d, T v) {
                              return v > T(0) ? d : slope * d;
                            });
                            g.accumulate(x, dx);
                          });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> y = x.value().unaryExpr([](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
  return x.graph().record("sigmoid", std::move(y), {x},
                          [x](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>& y) {
                            Tensor<T> dx = dy.cwiseProduct(
                                y.unaryExpr([](T s) { return s * (T(1) - s); }));
                            g.accumulate(x, dx);
                          });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  Tensor<T> y = x.value().unaryExpr([](T v) { return std::tanh(v); });
  return x.graph().record("tanh", std::move(y), {x},
                          [x](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>& y) {
                            Tensor<T> dx =
                                dy.cwiseProduct(y.unaryExpr([](T t) { return T(1) - t * t; }));
                            g.accumulate(x, dx);
                          });
}

// Column-wise concatenation of equal-height blocks.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      throw DimensionError("concat: row count mismatch " + std::to_string(p.rows()) + " vs " +
                           std::to_string(rows));
    cols += p.cols();
  }
  Tensor<T> y(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return parts.front().graph().record(
      "concat", std::move(y), parts,
      [parts](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
        Eigen::Index off = 0;
        for (const auto& p : parts) {
          if (p.requires_grad()) g.accumulate(p, Tensor<T>(dy.middleCols(off, p.cols())));
          off += p.cols();
        }
      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "add");
  return a.graph().record("add", a.value() + b.value(), {a, b},
                          [a, b](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            g.accumulate(a, dy);
                            g.accumulate(b, dy);
                          });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "sub");
  return a.graph().record("sub", a.value() - b.value(), {a, b},
                          [a, b](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            g.accumulate(a, dy);
                            if (b.requires_grad()) g.accumulate(b, Tensor<T>(-dy));
                          });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  return a.graph().record("scale", a.value() * c, {a},
                          [a, c](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            g.accumulate(a, Tensor<T>(dy * c));
                          });
}

// a + c elementwise.
template <typename T>
Var<T> shift(const Var<T>& a, T c) {
  Tensor<T> y = a.value().array() + c;
  return a.graph().record("shift", std::move(y), {a},
                          [a](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            g.accumulate(a, dy);
                          });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return a.graph().record("square", a.value().cwiseAbs2(), {a},
                          [a](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            g.accumulate(a, Tensor<T>(T(2) * dy.cwiseProduct(a.value())));
                          });
}

// Subgradient 0 at 0.
template <typename T>
Var<T> abs(const Var<T>& a) {
  return a.graph().record("abs", a.value().cwiseAbs(), {a},
                          [a](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            Tensor<T> dx = dy.binaryExpr(
                                a.value(), [](T d, T v) { return d * detail::sign(v); });
                            g.accumulate(a, dx);
                          });
}

template <typename T>
Var<T> squared_difference(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "squared_difference");
  Tensor<T> diff = a.value() - b.value();
  Tensor<T> y = diff.cwiseAbs2();
  return a.graph().record("squared_difference", std::move(y), {a, b},
                          [a, b, diff](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            Tensor<T> d = T(2) * dy.cwiseProduct(diff);
                            g.accumulate(a, d);
                            if (b.requires_grad()) g.accumulate(b, Tensor<T>(-d));
                          });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  return a.graph().record("sum", detail::scalar<T>(a.value().sum()), {a},
                          [a](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            g.accumulate(a, Tensor<T>::Constant(a.rows(), a.cols(), dy(0, 0)));
                          });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const auto n = static_cast<T>(a.value().size());
  if (a.value().size() == 0) throw DimensionError("mean: empty tensor");
  return a.graph().record("mean", detail::scalar<T>(a.value().sum() / n), {a},
                          [a, n](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            g.accumulate(a,
                                         Tensor<T>::Constant(a.rows(), a.cols(), dy(0, 0) / n));
                          });
}

// Per-row L1 norm: (B x n) -> (B x 1).
template <typename T>
Var<T> row_l1(const Var<T>& a) {
  Tensor<T> y = a.value().cwiseAbs().rowwise().sum();
  return a.graph().record("row_l1", std::move(y), {a},
                          [a](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            const auto& A = a.value();
                            Tensor<T> dx(A.rows(), A.cols());
                            for (Eigen::Index i = 0; i < A.rows(); ++i)
                              for (Eigen::Index j = 0; j < A.cols(); ++j)
                                dx(i, j) = dy(i, 0) * detail::sign(A(i, j));
                            g.accumulate(a, dx);
                          });
}

// Per-row Euclidean norm: (B x n) -> (B x 1). Subgradient 0 for a zero row.
template <typename T>
Var<T> row_l2(const Var<T>& a) {
  Tensor<T> y = a.value().rowwise().norm();
  return a.graph().record("row_l2", std::move(y), {a},
                          [a](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>& y) {
                            const auto& A = a.value();
                            Tensor<T> dx(A.rows(), A.cols());
                            for (Eigen::Index i = 0; i < A.rows(); ++i) {
                              if (y(i, 0) == T(0))
                                dx.row(i).setZero();
                              else
                                dx.row(i) = A.row(i) * (dy(i, 0) / y(i, 0));
                            }
                            g.accumulate(a, dx);
                          });
}

// Pairwise cosine similarities of the rows: (C x n) -> (C x C).
template <typename T>
Var<T> cosine_matrix(const Var<T>& a) {
  const auto& A = a.value();
  Tensor<T> norms = A.rowwise().norm();
  Tensor<T> unit = A;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    if (norms(i, 0) == T(0))
      throw NumericError("cosine_matrix: zero-norm row " + std::to_string(i) +
                         " (cosine undefined)");
    unit.row(i) /= norms(i, 0);
  }
  Tensor<T> k = unit * unit.transpose();
  return a.graph().record(
      "cosine_matrix", std::move(k), {a},
      [a, unit, norms](Graph<T>& g, const Tensor<T>& dk, const Tensor<T>&) {
        Tensor<T> du = (dk + dk.transpose()) * unit;
        Tensor<T> dx(unit.rows(), unit.cols());
        for (Eigen::Index i = 0; i < unit.rows(); ++i) {
          const T radial = du.row(i).dot(unit.row(i));
          dx.row(i) = (du.row(i) - radial * unit.row(i)) / norms(i, 0);
        }
        g.accumulate(a, dx);
      });
}

// Mean over rows of softmax cross-entropy against integer labels in [0, K).
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  const auto& L = logits.value();
  if (static_cast<std::size_t>(L.rows()) != labels.size())
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(L.rows()) + " rows");
  if (L.rows() == 0) throw DimensionError("softmax_cross_entropy: empty batch");
  Tensor<T> prob(L.rows(), L.cols());
  T total = 0;
  std::vector<int> lab(labels.begin(), labels.end());
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    const int y = lab[static_cast<std::size_t>(i)];
    if (y < 0 || y >= L.cols())
      throw DimensionError("softmax_cross_entropy: label " + std::to_string(y) +
                           " outside [0, " + std::to_string(L.cols()) + ")");
    const T mx = L.row(i).maxCoeff();
    const T lse = mx + std::log((L.row(i).array() - mx).exp().sum());
    prob.row(i) = (L.row(i).array() - lse).exp().matrix();
    total += lse - L(i, y);
  }
  const auto n = static_cast<T>(L.rows());
  return logits.graph().record(
      "softmax_cross_entropy", detail::scalar<T>(total / n), {logits},
      [logits, prob, lab, n](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
        Tensor<T> d = prob;
        for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, lab[static_cast<std::size_t>(i)]) -= T(1);
        g.accumulate(logits, Tensor<T>(d * (dy(0, 0) / n)));
      });
}

// Mean of each consecutive block of `block` rows: (K*block x n) -> (K x n).
template <typename T>
Var<T> block_row_mean(const Var<T>& a, Eigen::Index block) {
  const auto& A = a.value();
  if (block < 1 || A.rows() % block != 0)
    throw DimensionError("block_row_mean: " + std::to_string(A.rows()) +
                         " rows not divisible into blocks of " + std::to_string(block));
  const Eigen::Index k = A.rows() / block;
  Tensor<T> y(k, A.cols());
  for (Eigen::Index i = 0; i < k; ++i)
    y.row(i) = A.middleRows(i * block, block).colwise().sum() / static_cast<T>(block);
  return a.graph().record("block_row_mean", std::move(y), {a},
                          [a, block, k](Graph<T>& g, const Tensor<T>& dy, const Tensor<T>&) {
                            Tensor<T> dx(k * block, dy.cols());
                            for (Eigen::Index i = 0; i < k; ++i)
                              dx.middleRows(i * block, block).rowwise() =
                                  dy.row(i) / static_cast<T>(block);
                            g.accumulate(a, dx);
                          });
}

}  // namespace srgan::nd

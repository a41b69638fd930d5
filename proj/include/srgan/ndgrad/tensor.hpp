#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

#include "srgan/error.hpp"

namespace srgan::nd {

// Dense row-major 2-D array. Every quantity in the library is a batch of row
// vectors, so rank 2 covers vectors (1 x n), batches (B x n) and scalars (1 x 1).
template <typename T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

template <typename T>
std::string shape_str(const Tensor<T>& t) {
  return shape_str(t.rows(), t.cols());
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return t.allFinite();
}

// Cosine similarity of two equal-length non-zero vectors.
template <typename T, typename A, typename B>
T cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size())
    throw DimensionError("cosine: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  const T na = a.norm();
  const T nb = b.norm();
  if (na == T(0) || nb == T(0)) throw NumericError("cosine: zero-norm input");
  T c = a.cwiseProduct(b).sum() / (na * nb);
  if (c > T(1)) c = T(1);
  if (c < T(-1)) c = T(-1);
  return c;
}

template <typename T>
T cosine(const std::vector<T>& a, const std::vector<T>& b) {
  using Map = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  return cosine<T>(Map(a.data(), static_cast<Eigen::Index>(a.size())),
                   Map(b.data(), static_cast<Eigen::Index>(b.size())));
}

// Pairwise cosine similarities between the rows of `x` (no differentiation).
template <typename T>
Tensor<T> cosine_matrix_values(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const T n = y.row(i).norm();
    if (n == T(0)) throw NumericError("cosine_matrix: zero-norm row " + std::to_string(i));
    y.row(i) /= n;
  }
  return y * y.transpose();
}

}  // namespace srgan::nd

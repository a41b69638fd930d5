#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srgan/ndgrad/tensor.hpp"

namespace srgan {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment per parameter tensor plus the shared step count.
template <typename T>
struct AdamState {
  std::vector<nd::Tensor<T>> m;
  std::vector<nd::Tensor<T>> v;
  std::int64_t step = 0;
};

// Bias-corrected Adam update applied in place. Moments are created on first use.
template <typename T>
void adam_step(std::span<nd::Tensor<T>* const> params, std::span<const nd::Tensor<T>> grads,
               AdamState<T>& state, const AdamHyper& h) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(nd::Tensor<T>::Zero(p->rows(), p->cols()));
      state.v.push_back(nd::Tensor<T>::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size())
    throw DimensionError("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                         " tensors, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nd::require_same_shape(*params[i], grads[i], "adam_step");
    nd::require_same_shape(*params[i], state.m[i], "adam_step state");
  }
  ++state.step;
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T c1 = T(1) - static_cast<T>(std::pow(h.beta1, static_cast<double>(state.step)));
  const T c2 = T(1) - static_cast<T>(std::pow(h.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseAbs2();
    params[i]->array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

}  // namespace srgan

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "srgan/adam.hpp"

using srgan::AdamHyper;
using srgan::AdamState;
using srgan::adam_step;
using srgan::nd::Tensor;

namespace {

Tensor<double> scalar(double v) {
  Tensor<double> t(1, 1);
  t(0, 0) = v;
  return t;
}

void step(Tensor<double>& w, double g, AdamState<double>& st, const AdamHyper& h) {
  std::vector<Tensor<double>*> ps{&w};
  std::vector<Tensor<double>> gs{scalar(g)};
  adam_step<double>(ps, gs, st, h);
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor<double> w(2, 3);
  w << 1, -2, 3, 0.5, 0, -0.25;
  const Tensor<double> before = w;
  AdamState<double> st;
  std::vector<Tensor<double>*> ps{&w};
  std::vector<Tensor<double>> gs{Tensor<double>::Zero(2, 3)};
  adam_step<double>(ps, gs, st, AdamHyper{});
  EXPECT_EQ(w, before);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor<double> w = scalar(1.0);
  AdamState<double> st;
  AdamHyper h;
  h.lr = 0.1;
  step(w, 1.0, st, h);
  // m_hat = 1, v_hat = 1 -> update = lr / (1 + eps)
  EXPECT_NEAR(w(0, 0), 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, TwoStepStateTable) {
  Tensor<double> w = scalar(0.0);
  AdamState<double> st;
  AdamHyper h;
  h.lr = 0.01;
  // Hand-tracked with beta1 = 0.9, beta2 = 0.999, g1 = 2, g2 = -1.
  step(w, 2.0, st, h);
  EXPECT_NEAR(st.m[0](0, 0), 0.2, 1e-15);
  EXPECT_NEAR(st.v[0](0, 0), 0.004, 1e-15);
  const double w1 = -0.01 * 2.0 / (2.0 + 1e-8);
  EXPECT_NEAR(w(0, 0), w1, 1e-15);

  step(w, -1.0, st, h);
  const double m2 = 0.9 * 0.2 + 0.1 * -1.0;      // 0.08
  const double v2 = 0.999 * 0.004 + 0.001 * 1.0;  // 0.004996
  EXPECT_NEAR(st.m[0](0, 0), m2, 1e-15);
  EXPECT_NEAR(st.v[0](0, 0), v2, 1e-15);
  const double mhat = m2 / (1 - 0.81);
  const double vhat = v2 / (1 - 0.999 * 0.999);
  EXPECT_NEAR(w(0, 0), w1 - 0.01 * mhat / (std::sqrt(vhat) + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 2);
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor<double> w = Tensor<double>::Zero(2, 2);
  AdamState<double> st;
  std::vector<Tensor<double>*> ps{&w};
  std::vector<Tensor<double>> gs{Tensor<double>::Zero(2, 3)};
  EXPECT_THROW(adam_step<double>(ps, gs, st, AdamHyper{}), srgan::DimensionError);
}

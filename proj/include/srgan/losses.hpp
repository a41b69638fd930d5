#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "srgan/networks.hpp"

namespace srgan {

// Visual pivot loss from generated rows arranged as consecutive blocks of
// `draws` rows per class, aligned with the rows of `pivots`:
//   mean_c || p_c - mean_j fake_{c,j} ||_2
template <typename T>
nd::Var<T> vp_loss_from(const nd::Var<T>& fakes, const nd::Tensor<T>& pivots, Eigen::Index draws) {
  if (fakes.rows() != pivots.rows() * draws)
    throw DimensionError("loss_vp: " + std::to_string(fakes.rows()) + " generated rows for " +
                         std::to_string(pivots.rows()) + " classes x " + std::to_string(draws) +
                         " draws");
  auto& g = fakes.graph();
  return nd::mean(nd::row_l2(nd::sub(g.constant(pivots), nd::block_row_mean(fakes, draws))));
}

// Repeats each row `times` times, keeping consecutive copies together.
template <typename T>
nd::Tensor<T> repeat_rows(const nd::Tensor<T>& x, Eigen::Index times) {
  nd::Tensor<T> out(x.rows() * times, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.middleRows(i * times, times).rowwise() = x.row(i);
  return out;
}

// `semantic`, `rectified` and `pivots` have one row per seen class; `noise`
// holds draws rows per class, grouped by class.
template <typename T>
nd::Var<T> loss_vp(nd::Graph<T>& g, const GenParams<T>& G, const nd::Tensor<T>& pivots,
                   const nd::Tensor<T>& semantic, const nd::Tensor<T>& rectified,
                   const nd::Tensor<T>& noise, bool trainable = true) {
  if (semantic.rows() != pivots.rows() || rectified.rows() != pivots.rows())
    throw DimensionError("loss_vp: pivot/semantic/rectified row counts differ");
  if (pivots.rows() == 0 || noise.rows() % pivots.rows() != 0 || noise.rows() == 0)
    throw DimensionError("loss_vp: need >= 1 noise draw per class");
  const Eigen::Index draws = noise.rows() / pivots.rows();
  nd::Var<T> fakes = generate(G, g.constant(repeat_rows(semantic, draws)),
                              g.constant(repeat_rows(rectified, draws)), g.constant(noise), trainable);
  return vp_loss_from(fakes, pivots, draws);
}

template <typename T>
struct DiscLoss {
  nd::Var<T> fake_score;  // mean critic score on generated features
  nd::Var<T> real_score;  // mean critic score on real features
  nd::Var<T> penalty;     // lambda * mean((||grad D(v_hat)|| - 1)^2)
  nd::Var<T> cls;         // (CE(fake) + CE(real)) / 2
  nd::Var<T> total;
};

// Interpolates v_hat = eps * real + (1 - eps) * fake, one eps per row.
template <typename T>
nd::Tensor<T> interpolate(const nd::Tensor<T>& real, const nd::Tensor<T>& fake,
                          std::span<const T> eps) {
  nd::require_same_shape(real, fake, "interpolate");
  if (static_cast<Eigen::Index>(eps.size()) != real.rows())
    throw DimensionError("interpolate: " + std::to_string(eps.size()) + " weights for " +
                         std::to_string(real.rows()) + " rows");
  nd::Tensor<T> out(real.rows(), real.cols());
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    const T e = eps[static_cast<std::size_t>(i)];
    out.row(i) = e * real.row(i) + (T(1) - e) * fake.row(i);
  }
  return out;
}

// Critic loss with gradient penalty and auxiliary classification. `labels`
// are classifier-head indices shared by the real and the fake rows.
template <typename T>
DiscLoss<T> loss_d(nd::Graph<T>& g, const DiscParams<T>& D, const nd::Tensor<T>& real,
                   const nd::Tensor<T>& fake, std::span<const int> labels, std::span<const T> eps,
                   T lambda, bool trainable = true) {
  if (real.rows() == 0) throw DimensionError("loss_d: empty batch");
  const nd::Tensor<T> vhat = interpolate(real, fake, eps);
  auto on_fake = critic_and_classify(D, g.constant(fake), trainable);
  auto on_real = critic_and_classify(D, g.constant(real), trainable);
  nd::Var<T> grad = nd::input_gradient(D.critic_path(), g.constant(vhat), trainable);
  DiscLoss<T> l;
  l.fake_score = nd::mean(on_fake.score);
  l.real_score = nd::mean(on_real.score);
  l.penalty = nd::scale(nd::mean(nd::square(nd::shift(nd::row_l2(grad), T(-1)))), lambda);
  l.cls = nd::scale(nd::add(nd::softmax_cross_entropy(on_fake.logits, labels),
                            nd::softmax_cross_entropy(on_real.logits, labels)),
                    T(0.5));
  l.total = nd::add(nd::add(nd::sub(l.fake_score, l.real_score), l.penalty), l.cls);
  return l;
}

// Same, generating the fakes with a frozen G and drawing eps ~ U(0, 1) per row.
template <typename T, typename Rng>
DiscLoss<T> loss_d(nd::Graph<T>& g, const DiscParams<T>& D, const GenParams<T>& G,
                   const nd::Tensor<T>& real, const nd::Tensor<T>& semantic,
                   const nd::Tensor<T>& rectified, const nd::Tensor<T>& noise,
                   std::span<const int> labels, T lambda, Rng& rng) {
  const nd::Tensor<T> fake = generate(G, semantic, rectified, noise);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<T> eps(static_cast<std::size_t>(real.rows()));
  for (auto& e : eps) e = static_cast<T>(u(rng));
  return loss_d<T>(g, D, real, fake, labels, eps, lambda);
}

template <typename T>
struct GenAdvLoss {
  nd::Var<T> adversarial;  // -mean critic score on fakes
  nd::Var<T> cls;          // CE of the classifier head on fakes
  nd::Var<T> total;
};

// D is bound frozen; gradients flow into whatever produced `fakes`.
template <typename T>
GenAdvLoss<T> loss_g_adv_cls(const DiscParams<T>& D, const nd::Var<T>& fakes,
                             std::span<const int> labels) {
  if (fakes.rows() == 0) throw DimensionError("loss_g_adv_cls: empty batch");
  auto out = critic_and_classify(D, fakes, false);
  GenAdvLoss<T> l;
  l.adversarial = nd::scale(nd::mean(out.score), T(-1));
  l.cls = nd::softmax_cross_entropy(out.logits, labels);
  l.total = nd::add(l.adversarial, l.cls);
  return l;
}

// Mean over rows of the per-row L1 distance.
template <typename T>
nd::Var<T> l1_loss_from(const nd::Var<T>& produced, const nd::Tensor<T>& target, const char* what) {
  if (produced.cols() != target.cols() || produced.rows() != target.rows())
    throw DimensionError(std::string(what) + ": output " +
                         nd::shape_str(produced.rows(), produced.cols()) + " vs target " +
                         nd::shape_str(target));
  return nd::mean(nd::row_l1(nd::sub(produced, produced.graph().constant(target))));
}

// || G(s, r, E(v)) - v ||_1 averaged over the batch.
template <typename T>
nd::Var<T> loss_pre(nd::Graph<T>& g, const EncParams<T>& E, const GenParams<T>& G,
                    const nd::Tensor<T>& visual, const nd::Tensor<T>& semantic,
                    const nd::Tensor<T>& rectified, bool trainable = true) {
  nd::Var<T> code = nd::forward(E.net, g.constant(visual), trainable);
  nd::Var<T> recon = generate(G, g.constant(semantic), g.constant(rectified), code, trainable);
  return l1_loss_from(recon, visual, "loss_pre");
}

// || F(G(s, r, z)) - [s, r, z] ||_1 averaged over the batch.
template <typename T>
nd::Var<T> loss_post(nd::Graph<T>& g, const PostParams<T>& F, const GenParams<T>& G,
                     const nd::Tensor<T>& semantic, const nd::Tensor<T>& rectified,
                     const nd::Tensor<T>& noise, bool trainable = true) {
  const Eigen::Index width = semantic.cols() + rectified.cols() + noise.cols();
  if (F.net.out_width() != width)
    throw DimensionError("loss_post: F outputs width " + std::to_string(F.net.out_width()) +
                         " but [s, r, z] has width " + std::to_string(width));
  nd::Var<T> s = g.constant(semantic);
  nd::Var<T> r = g.constant(rectified);
  nd::Var<T> z = g.constant(noise);
  nd::Var<T> fake = generate(G, s, r, z, trainable);
  nd::Var<T> back = nd::forward(F.net, fake, trainable);
  return l1_loss_from(back, nd::concat<T>({s, r, z}).value(), "loss_post");
}

// Combined generator objective with unit weights.
template <typename T>
nd::Var<T> loss_g_total(const nd::Var<T>& adv_cls, const nd::Var<T>& vp, const nd::Var<T>& pre,
                        const nd::Var<T>& post) {
  return nd::add(nd::add(adv_cls, vp), nd::add(pre, post));
}

}  // namespace srgan

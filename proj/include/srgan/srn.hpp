#pragma once

#include <random>
#include <vector>

#include "srgan/adam.hpp"
#include "srgan/data/dataset.hpp"
#include "srgan/ndgrad/mlp.hpp"

namespace srgan {

// Semantic rectifying network: d_s -> hidden (leaky relu) -> d_s (sigmoid).
template <typename T>
struct SrnParams {
  nd::MlpParams<T> net;

  Eigen::Index width() const { return net.in_width(); }
};

template <typename T, typename Rng>
SrnParams<T> make_srn(Eigen::Index d_s, Eigen::Index hidden, Rng& rng) {
  return {nd::make_mlp<T>({d_s, hidden, d_s}, nd::Activation::leaky_relu,
                          nd::Activation::sigmoid, rng)};
}

template <typename T>
nd::Var<T> rectify(const SrnParams<T>& p, const nd::Var<T>& s, bool trainable = false) {
  if (s.cols() != p.width())
    throw DimensionError("rectify: semantic width " + std::to_string(s.cols()) +
                         " but network expects " + std::to_string(p.width()));
  if (p.net.out_width() != p.width())
    throw DimensionError("rectify: output width must equal input width");
  return nd::forward(p.net, s, trainable);
}

template <typename T>
nd::Tensor<T> rectify(const SrnParams<T>& p, const nd::Tensor<T>& s) {
  nd::Graph<T> g;
  return rectify(p, g.constant(s)).value();
}

template <typename T>
struct SrnLoss {
  nd::Var<T> structure;  // mean over all ordered class pairs of |cos(p_i,p_j) - cos(r_i,r_j)|
  nd::Var<T> semantic;   // mean over classes of ||s - r||_2
  nd::Var<T> total;
};

// Rectifying loss from already-rectified rows (C x d_s), the original semantic
// rows (C x d_s) and the pivot cosine matrix (C x C).
template <typename T>
SrnLoss<T> srn_loss_from(const nd::Var<T>& rectified, const nd::Var<T>& semantics,
                         const nd::Tensor<T>& pivot_cosines) {
  if (pivot_cosines.rows() != rectified.rows() || pivot_cosines.cols() != rectified.rows())
    throw DimensionError("srn_loss: " + std::to_string(rectified.rows()) +
                         " rectified rows but pivot cosine matrix " + nd::shape_str(pivot_cosines));
  auto& g = rectified.graph();
  SrnLoss<T> l;
  l.structure = nd::mean(nd::abs(nd::sub(g.constant(pivot_cosines), nd::cosine_matrix(rectified))));
  l.semantic = nd::mean(nd::row_l2(nd::sub(semantics, rectified)));
  l.total = nd::add(l.structure, l.semantic);
  return l;
}

// Rows of `semantic` and `pivots` must describe the same seen classes in the same order.
template <typename T>
SrnLoss<T> srn_loss(nd::Graph<T>& g, const SrnParams<T>& p, const nd::Tensor<T>& pivots,
                    const nd::Tensor<T>& semantic, bool trainable = true) {
  if (pivots.rows() != semantic.rows())
    throw DimensionError("srn_loss: " + std::to_string(pivots.rows()) + " pivots for " +
                         std::to_string(semantic.rows()) + " semantic rows");
  nd::Var<T> s = g.constant(semantic);
  return srn_loss_from(rectify(p, s, trainable), s, nd::cosine_matrix_values(pivots));
}

struct SrnConfig {
  int iters = 2000;
  Eigen::Index hidden = 1024;
  AdamHyper adam{1e-4, 0.5, 0.9, 1e-8};
};

struct SrnHistory {
  std::vector<double> structure;
  std::vector<double> semantic;
};

// Full-batch Adam on the rectifying loss over all seen classes. Rows of
// `pivots` and `semantic` are aligned by class.
template <typename T>
SrnHistory train_srn(SrnParams<T>& p, const nd::Tensor<T>& pivots, const nd::Tensor<T>& semantic,
                     const SrnConfig& cfg) {
  SrnHistory hist;
  AdamState<T> state;
  const nd::Tensor<T> pivot_cos = nd::cosine_matrix_values(pivots);
  std::vector<nd::Tensor<T>*> tensors;
  p.net.for_each_tensor("", [&](const std::string&, nd::Tensor<T>& t) { tensors.push_back(&t); });
  for (int it = 0; it < cfg.iters; ++it) {
    nd::Graph<T> g;
    nd::Var<T> s = g.constant(semantic);
    auto loss = srn_loss_from(rectify(p, s, true), s, pivot_cos);
    g.backward(loss.total);
    hist.structure.push_back(static_cast<double>(loss.structure.value()(0, 0)));
    hist.semantic.push_back(static_cast<double>(loss.semantic.value()(0, 0)));
    std::vector<nd::Tensor<T>> grads;
    for (auto* t : tensors) grads.push_back(g.grad_of(*t));
    adam_step<T>(tensors, grads, state, cfg.adam);
  }
  return hist;
}

// Seen-class semantic rows aligned with the pivot order.
inline data::Matrix seen_semantics(const data::Dataset& ds, const data::VisualPivots& vp) {
  data::Matrix s(static_cast<Eigen::Index>(vp.class_ids.size()), ds.semantic_width());
  for (std::size_t k = 0; k < vp.class_ids.size(); ++k)
    s.row(static_cast<Eigen::Index>(k)) = ds.semantic.row(vp.class_ids[k]);
  return s;
}

// Initializes and trains R on the seen classes of a (normalized) dataset.
template <typename T, typename Rng>
SrnParams<T> train_srn(const data::Dataset& ds, const data::SplitSpec& split, const SrnConfig& cfg,
                       Rng& rng, SrnHistory* history = nullptr) {
  auto vp = data::compute_pivots(ds, split);
  auto p = make_srn<T>(ds.semantic_width(), cfg.hidden, rng);
  auto h = train_srn<T>(p, vp.pivots.template cast<T>(), seen_semantics(ds, vp).template cast<T>(), cfg);
  if (history) *history = std::move(h);
  return p;
}

}  // namespace srgan

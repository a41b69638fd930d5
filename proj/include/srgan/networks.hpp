#pragma once

#include <string>
#include <utility>
#include <vector>

#include "srgan/ndgrad/mlp.hpp"

namespace srgan {

// Widths shared by G, D, E and F.
struct NetworkShape {
  Eigen::Index d_v = 0;
  Eigen::Index d_s = 0;
  Eigen::Index d_z = 100;
  Eigen::Index head_classes = 0;  // classifier logits of D
  Eigen::Index gen_hidden = 2048;
  Eigen::Index disc_hidden = 2048;
  Eigen::Index enc_hidden = 2048;
  Eigen::Index post_hidden = 2048;

  Eigen::Index condition_width() const { return 2 * d_s + d_z; }
};

// G: [s, r, z] -> three leaky-relu layers of equal width with a residual link
// from hidden-1 to the hidden-3 pre-activation -> tanh output of width d_v.
template <typename T>
struct GenParams {
  nd::MlpParams<T> net;
};

// D: shared leaky-relu trunk, a linear critic head (1 output) and a linear
// classifier head. The critic path is piecewise-linear by construction.
template <typename T>
struct DiscParams {
  nd::MlpParams<T> trunk;
  nd::Layer<T> critic;
  nd::Layer<T> classifier;

  std::vector<const nd::Layer<T>*> critic_path() const {
    std::vector<const nd::Layer<T>*> path;
    for (const auto& l : trunk.layers) path.push_back(&l);
    path.push_back(&critic);
    return path;
  }

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    trunk.for_each_tensor(prefix + "trunk.", f);
    f(prefix + "critic.weight", critic.weight);
    f(prefix + "critic.bias", critic.bias);
    f(prefix + "classifier.weight", classifier.weight);
    f(prefix + "classifier.bias", classifier.bias);
  }

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) const {
    trunk.for_each_tensor(prefix + "trunk.", f);
    f(prefix + "critic.weight", critic.weight);
    f(prefix + "critic.bias", critic.bias);
    f(prefix + "classifier.weight", classifier.weight);
    f(prefix + "classifier.bias", classifier.bias);
  }
};

// E: visual feature -> noise code (linear output).
template <typename T>
struct EncParams {
  nd::MlpParams<T> net;
};

// F: visual feature -> [s, r, z] (linear output).
template <typename T>
struct PostParams {
  nd::MlpParams<T> net;
};

template <typename T, typename Rng>
GenParams<T> make_generator(const NetworkShape& s, Rng& rng) {
  GenParams<T> g;
  g.net = nd::make_mlp<T>({s.condition_width(), s.gen_hidden, s.gen_hidden, s.gen_hidden, s.d_v},
                          nd::Activation::leaky_relu, nd::Activation::tanh, rng);
  g.net.residual = nd::Residual{0, 2};
  g.net.validate();
  return g;
}

template <typename T, typename Rng>
DiscParams<T> make_discriminator(const NetworkShape& s, Rng& rng) {
  if (s.head_classes < 1) throw DimensionError("discriminator: classifier needs >= 1 class");
  DiscParams<T> d;
  d.trunk.layers.push_back(nd::make_layer<T>(s.d_v, s.disc_hidden, nd::Activation::leaky_relu, rng));
  d.critic = nd::make_layer<T>(s.disc_hidden, 1, nd::Activation::linear, rng);
  d.classifier = nd::make_layer<T>(s.disc_hidden, s.head_classes, nd::Activation::linear, rng);
  return d;
}

template <typename T, typename Rng>
EncParams<T> make_encoder(const NetworkShape& s, Rng& rng) {
  return {nd::make_mlp<T>({s.d_v, s.enc_hidden, s.d_z}, nd::Activation::leaky_relu,
                          nd::Activation::linear, rng)};
}

template <typename T, typename Rng>
PostParams<T> make_post(const NetworkShape& s, Rng& rng) {
  return {nd::make_mlp<T>({s.d_v, s.post_hidden, s.condition_width()},
                          nd::Activation::leaky_relu, nd::Activation::linear, rng)};
}

// G(s, r, z) for a batch of rows.
template <typename T>
nd::Var<T> generate(const GenParams<T>& G, const nd::Var<T>& s, const nd::Var<T>& r,
                    const nd::Var<T>& z, bool trainable = true) {
  if (s.cols() != r.cols())
    throw DimensionError("generate: semantic width " + std::to_string(s.cols()) +
                         " but rectified width " + std::to_string(r.cols()));
  if (s.cols() + r.cols() + z.cols() != G.net.in_width())
    throw DimensionError("generate: conditioning width " +
                         std::to_string(s.cols() + r.cols() + z.cols()) +
                         " but generator expects " + std::to_string(G.net.in_width()));
  return nd::forward(G.net, nd::concat<T>({s, r, z}), trainable);
}

template <typename T>
nd::Tensor<T> generate(const GenParams<T>& G, const nd::Tensor<T>& s, const nd::Tensor<T>& r,
                       const nd::Tensor<T>& z) {
  nd::Graph<T> g;
  return generate(G, g.constant(s), g.constant(r), g.constant(z), false).value();
}

template <typename T>
struct CriticOutput {
  nd::Var<T> score;   // B x 1
  nd::Var<T> logits;  // B x K
};

template <typename T>
CriticOutput<T> critic_and_classify(const DiscParams<T>& D, const nd::Var<T>& v,
                                    bool trainable = true) {
  if (v.cols() != D.trunk.in_width())
    throw DimensionError("critic_and_classify: feature width " + std::to_string(v.cols()) +
                         " but discriminator expects " + std::to_string(D.trunk.in_width()));
  auto& g = v.graph();
  nd::Var<T> h = nd::forward(D.trunk, v, trainable);
  CriticOutput<T> out;
  out.score = nd::affine(h, g.param(D.critic.weight, trainable), g.param(D.critic.bias, trainable));
  out.logits = nd::affine(h, g.param(D.classifier.weight, trainable),
                          g.param(D.classifier.bias, trainable));
  return out;
}

}  // namespace srgan

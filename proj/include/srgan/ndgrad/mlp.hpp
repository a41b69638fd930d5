#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "srgan/ndgrad/ops.hpp"

namespace srgan::nd {

enum class Activation { linear, leaky_relu, sigmoid, tanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw DimensionError("unknown activation '" + s + "'");
}

// Affine map followed by an activation. weight is (out x in), bias (1 x out).
template <typename T>
struct Layer {
  Tensor<T> weight;
  Tensor<T> bias;
  Activation activation = Activation::linear;

  Eigen::Index in_width() const { return weight.cols(); }
  Eigen::Index out_width() const { return weight.rows(); }
};

// Output (post-activation) of layer `source` is added to the pre-activation of
// layer `target`; requires source < target and equal widths.
struct Residual {
  std::size_t source = 0;
  std::size_t target = 0;
};

template <typename T>
struct MlpParams {
  std::vector<Layer<T>> layers;
  std::optional<Residual> residual;

  Eigen::Index in_width() const { return layers.front().in_width(); }
  Eigen::Index out_width() const { return layers.back().out_width(); }

  void validate() const {
    if (layers.empty()) throw DimensionError("mlp: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.bias.rows() != 1 || l.bias.cols() != l.weight.rows())
        throw DimensionError("mlp: layer " + std::to_string(i) + " bias " + shape_str(l.bias) +
                             " vs weight " + shape_str(l.weight));
      if (i > 0 && l.in_width() != layers[i - 1].out_width())
        throw DimensionError("mlp: layer " + std::to_string(i) + " expects width " +
                             std::to_string(l.in_width()) + " but layer " +
                             std::to_string(i - 1) + " produces " +
                             std::to_string(layers[i - 1].out_width()));
    }
    if (residual) {
      const auto [s, t] = *residual;
      if (s >= t || t >= layers.size())
        throw DimensionError("mlp: residual link " + std::to_string(s) + "->" +
                             std::to_string(t) + " out of order");
      if (layers[s].out_width() != layers[t].out_width())
        throw DimensionError("mlp: residual link joins widths " +
                             std::to_string(layers[s].out_width()) + " and " +
                             std::to_string(layers[t].out_width()));
    }
  }

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      f(prefix + "layer" + std::to_string(i) + ".weight", layers[i].weight);
      f(prefix + "layer" + std::to_string(i) + ".bias", layers[i].bias);
    }
  }
  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      f(prefix + "layer" + std::to_string(i) + ".weight", layers[i].weight);
      f(prefix + "layer" + std::to_string(i) + ".bias", layers[i].bias);
    }
  }
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
template <typename T, typename Rng>
Layer<T> make_layer(Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Layer<T> l;
  l.weight.resize(out, in);
  l.bias.resize(1, out);
  for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = static_cast<T>(u(rng));
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = static_cast<T>(u(rng));
  l.activation = act;
  return l;
}

// Widths {w0, w1, ..., wn}; hidden layers use `hidden`, the last uses `output`.
template <typename T, typename Rng>
MlpParams<T> make_mlp(const std::vector<Eigen::Index>& widths, Activation hidden, Activation output,
                      Rng& rng) {
  if (widths.size() < 2) throw DimensionError("make_mlp: need at least input and output width");
  MlpParams<T> p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    p.layers.push_back(make_layer<T>(widths[i], widths[i + 1],
                                     i + 2 == widths.size() ? output : hidden, rng));
  return p;
}

template <typename T>
Var<T> activate(const Var<T>& x, Activation a) {
  switch (a) {
    case Activation::linear: return x;
    case Activation::leaky_relu: return leaky_relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
  }
  return x;
}

// Records the network on `x`'s graph. With trainable=false the parameters are
// bound as constants and receive no gradient.
template <typename T>
Var<T> forward(const MlpParams<T>& params, const Var<T>& x, bool trainable = true) {
  params.validate();
  if (x.cols() != params.in_width())
    throw DimensionError("mlp forward: input width " + std::to_string(x.cols()) +
                         " but network expects " + std::to_string(params.in_width()));
  Graph<T>& g = x.graph();
  Var<T> h = x;
  Var<T> skip;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Var<T> pre = affine(h, g.param(l.weight, trainable), g.param(l.bias, trainable));
    if (params.residual && params.residual->target == i) pre = add(pre, skip);
    h = activate(pre, l.activation);
    if (params.residual && params.residual->source == i) skip = h;
  }
  return h;
}

// Inference-only evaluation on a fresh graph.
template <typename T>
Tensor<T> evaluate(const MlpParams<T>& params, const Tensor<T>& x) {
  Graph<T> g;
  return forward(params, g.constant(x), false).value();
}

// Gradient of a scalar-output network w.r.t. its input, as a node that is
// itself differentiable w.r.t. the layer weights. `path` lists the layers from
// input to the scalar output; each must be affine with a linear or leaky-relu
// activation. Slope masks are locally constant, so second derivatives of the
// activations are zero almost everywhere and biases receive no gradient.
template <typename T>
Var<T> input_gradient(const std::vector<const Layer<T>*>& path, const Var<T>& x,
                      bool trainable = true) {
  if (path.empty()) throw DimensionError("input_gradient: empty layer path");
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto act = path[i]->activation;
    if (act != Activation::linear && act != Activation::leaky_relu)
      throw DimensionError("input_gradient: layer " + std::to_string(i) + " uses '" +
                           to_string(act) +
                           "', critic path must be piecewise-linear (affine + leaky_relu)");
    if (i > 0 && path[i]->in_width() != path[i - 1]->out_width())
      throw DimensionError("input_gradient: layer widths do not chain at " + std::to_string(i));
  }
  if (path.back()->out_width() != 1)
    throw DimensionError("input_gradient: path must end in a scalar output, got width " +
                         std::to_string(path.back()->out_width()));
  if (x.cols() != path.front()->in_width())
    throw DimensionError("input_gradient: input width " + std::to_string(x.cols()) +
                         " but critic expects " + std::to_string(path.front()->in_width()));

  const T slope = T(kLeakySlope);
  const Eigen::Index batch = x.rows();
  const std::size_t depth = path.size();

  // Forward: slope masks per layer.
  std::vector<Tensor<T>> masks(depth);
  Tensor<T> h = x.value();
  for (std::size_t k = 0; k < depth; ++k) {
    Tensor<T> pre = h * path[k]->weight.transpose();
    pre.rowwise() += path[k]->bias.row(0);
    if (path[k]->activation == Activation::leaky_relu) {
      masks[k] = pre.unaryExpr([slope](T v) { return v > T(0) ? T(1) : slope; });
      h = pre.cwiseProduct(masks[k]);
    } else {
      masks[k] = Tensor<T>::Ones(pre.rows(), pre.cols());
      h = std::move(pre);
    }
  }

  // Reverse chain: u_depth = 1, a_k = m_k * u_{k+1}, u_k = a_k W_k.
  std::vector<Tensor<T>> scaled(depth);
  Tensor<T> u = Tensor<T>::Ones(batch, 1);
  for (std::size_t k = depth; k-- > 0;) {
    scaled[k] = masks[k].cwiseProduct(u);
    u = scaled[k] * path[k]->weight;
  }

  Graph<T>& g = x.graph();
  std::vector<Var<T>> weights;
  std::vector<Var<T>> parents;
  for (const auto* l : path) {
    weights.push_back(g.param(l->weight, trainable));
    parents.push_back(weights.back());
    // Biases participate in the masks only.
    parents.push_back(g.param(l->bias, trainable));
  }
  parents.push_back(x);
  return g.record(
      "input_gradient", std::move(u), parents,
      [weights, masks, scaled](Graph<T>& g, const Tensor<T>& du0, const Tensor<T>&) {
        Tensor<T> du = du0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
          const Tensor<T>& w = weights[k].value();
          if (weights[k].requires_grad()) g.accumulate(weights[k], Tensor<T>(scaled[k].transpose() * du));
          if (k + 1 < weights.size()) du = masks[k].cwiseProduct(du * w.transpose());
        }
      });
}

}  // namespace srgan::nd

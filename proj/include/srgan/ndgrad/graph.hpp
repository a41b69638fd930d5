#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "srgan/ndgrad/tensor.hpp"

namespace srgan::nd {

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid as long as its graph lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const { return graph_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  bool requires_grad() const { return graph_->requires_grad(id_); }

 private:
  friend class Graph<T>;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape of primitive operations recorded in execution order, which is a
// topological order. A graph is built for one forward pass and consumed by a
// single backward pass.
template <typename T>
class Graph {
 public:
  using BackwardFn =
      std::function<void(Graph&, const Tensor<T>& grad_out, const Tensor<T>& out_value)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf holding a copy of `v`; never receives a gradient.
  Var<T> constant(Tensor<T> v) { return push_leaf(std::move(v), nullptr, false, "constant"); }

  // Leaf holding a copy of `v` whose gradient is tracked.
  Var<T> input(Tensor<T> v) { return push_leaf(std::move(v), nullptr, true, "input"); }

  // Leaf referring to externally owned parameter storage. Binding the same
  // storage twice returns the same node, so gradients from repeated use add up.
  // The storage must outlive the graph and stay unmodified until backward ends.
  Var<T> param(const Tensor<T>& storage, bool trainable = true) {
    auto it = bound_.find(&storage);
    if (it != bound_.end()) {
      Node& n = nodes_[it->second];
      n.requires_grad = n.requires_grad || trainable;
      return Var<T>(this, it->second);
    }
    Var<T> v = push_leaf(Tensor<T>(), &storage, trainable, "param");
    bound_.emplace(&storage, v.id());
    return v;
  }

  // Records the result of an op. `parents` decide whether the result needs a
  // gradient; `backward` receives d(loss)/d(result) plus the op's own output
  // and accumulates into parents.
  Var<T> record(std::string op, Tensor<T> value, const std::vector<Var<T>>& parents,
                BackwardFn backward) {
    if (!value.allFinite())
      throw NumericError("non-finite value produced by op '" + op + "'");
    bool needs = false;
    for (const auto& p : parents) {
      check_owned(p, op.c_str());
      needs = needs || nodes_[p.id_].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    n.op = std::move(op);
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  // Reverse sweep from a 1x1 output.
  void backward(const Var<T>& output) {
    check_owned(output, "backward");
    const Tensor<T>& out = value(output.id_);
    if (out.rows() != 1 || out.cols() != 1)
      throw GraphError("backward: seed must be a scalar, got " + shape_str(out));
    if (consumed_) throw GraphError("backward: graph already consumed by a previous sweep");
    consumed_ = true;
    if (!nodes_[output.id_].requires_grad) return;
    nodes_[output.id_].grad = Tensor<T>::Ones(1, 1);
    for (std::size_t i = output.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad, n.value);
    }
  }

  // Accumulates `g` into the gradient of `v` (no-op for non-differentiable nodes).
  void accumulate(const Var<T>& v, const Tensor<T>& g) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    const Tensor<T>& val = value(v.id_);
    if (g.rows() != val.rows() || g.cols() != val.cols())
      throw GraphError("accumulate: gradient " + shape_str(g) + " for value " + shape_str(val) +
                       " in op '" + n.op + "'");
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  // Gradient of the last backward output w.r.t. `v`; zeros if unreached.
  Tensor<T> grad(const Var<T>& v) const {
    check_owned(v, "grad");
    const Node& n = nodes_[v.id_];
    if (n.grad.size() == 0) return Tensor<T>::Zero(value(v.id_).rows(), value(v.id_).cols());
    return n.grad;
  }

  // Gradient w.r.t. bound parameter storage; zeros if the storage was unused.
  Tensor<T> grad_of(const Tensor<T>& storage) const {
    auto it = bound_.find(&storage);
    if (it == bound_.end()) return Tensor<T>::Zero(storage.rows(), storage.cols());
    return grad(Var<T>(const_cast<Graph*>(this), it->second));
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    std::string op;
    BackwardFn backward;
  };

  Var<T> push_leaf(Tensor<T> v, const Tensor<T>* ref, bool requires_grad, const char* op) {
    const Tensor<T>& check = ref ? *ref : v;
    if (!check.allFinite()) throw NumericError(std::string("non-finite value in ") + op + " leaf");
    Node n;
    n.value = std::move(v);
    n.ref = ref;
    n.requires_grad = requires_grad;
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  void check_owned(const Var<T>& v, const char* where) const {
    if (v.graph_ != this || v.id_ >= nodes_.size())
      throw GraphError(std::string(where) +
                       ": graph replay mismatch (variable belongs to another graph)");
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> bound_;
  bool consumed_ = false;
};

}  // namespace srgan::nd

#pragma once

// Reverse-mode differentiation over a recorded tape of tensor operations.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "styleinv/tensor.hpp"

namespace styleinv {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int i) const { return value().dim(i); }
};

template <typename T>
class Graph {
 public:
  // gin[i] is null when input i does not need a gradient; otherwise it is a
  // zero-initialised (or partially accumulated) buffer shaped like input i.
  using BackwardFn = std::function<void(const Tensor<T>& gout, std::span<Tensor<T>* const> gin)>;

  struct Node {
    std::string kind;
    std::vector<int> inputs;
    Tensor<T> value;
    BackwardFn backward;
    bool requires_grad = false;
  };

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) { return push("constant", {}, std::move(value), {}, false); }

  /// A differentiable input (gradient is reported for it).
  Var<T> leaf(Tensor<T> value) {
    return push("leaf", {}, std::move(value), {}, grad_enabled_);
  }

  Var<T> param(const std::string& name, Tensor<T> value) {
    Var<T> v = push("param", {}, std::move(value), {}, grad_enabled_);
    params_.emplace_back(name, v.id);
    return v;
  }

  /// Appends an operation node. The backward closure is dropped when
  /// differentiation is disabled or no input needs a gradient.
  Var<T> record(std::string kind, std::initializer_list<Var<T>> inputs, Tensor<T> value,
                BackwardFn fn) {
    return record(std::move(kind), std::vector<Var<T>>(inputs), std::move(value), std::move(fn));
  }

  Var<T> record(std::string kind, const std::vector<Var<T>>& inputs, Tensor<T> value,
                BackwardFn fn) {
    std::vector<int> ids;
    ids.reserve(inputs.size());
    bool needs = false;
    for (const Var<T>& v : inputs) {
      check(v);
      ids.push_back(v.id);
      needs = needs || nodes_[static_cast<std::size_t>(v.id)].requires_grad;
    }
    needs = needs && grad_enabled_;
    return push(std::move(kind), std::move(ids), std::move(value), needs ? std::move(fn) : BackwardFn{},
                needs);
  }

  const Node& node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw Error("graph: node " + std::to_string(id) + " is not on this graph (detached node)");
    return nodes_[static_cast<std::size_t>(id)];
  }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::pair<std::string, int>>& params() const { return params_; }

  void check(const Var<T>& v) const {
    if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw Error("graph: variable does not belong to this graph (detached node)");
  }

 private:
  Var<T> push(std::string kind, std::vector<int> inputs, Tensor<T> value, BackwardFn fn,
              bool requires_grad) {
    nodes_.push_back(Node{std::move(kind), std::move(inputs), std::move(value), std::move(fn),
                          requires_grad});
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  bool grad_enabled_;
  std::deque<Node> nodes_;  // deque: node references stay valid as the tape grows
  std::vector<std::pair<std::string, int>> params_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->node(id).value;
}

/// Gradient of a scalar loss with respect to every node that required one.
template <typename T>
class Gradients {
 public:
  Gradients(const Graph<T>* graph, std::vector<std::optional<Tensor<T>>> grads)
      : graph_(graph), grads_(std::move(grads)) {}

  bool has(const Var<T>& v) const {
    return v.graph == graph_ && v.id >= 0 && static_cast<std::size_t>(v.id) < grads_.size() &&
           grads_[static_cast<std::size_t>(v.id)].has_value();
  }

  /// Gradient for v; zeros when the loss does not depend on v.
  Tensor<T> at(const Var<T>& v) const {
    graph_->check(v);
    const auto& g = grads_[static_cast<std::size_t>(v.id)];
    return g ? *g : Tensor<T>(v.shape());
  }

  /// (parameter name, gradient) in registration order.
  std::vector<std::pair<std::string, Tensor<T>>> for_params() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (const auto& [name, id] : graph_->params())
      out.emplace_back(name, at(Var<T>{const_cast<Graph<T>*>(graph_), id}));
    return out;
  }

 private:
  const Graph<T>* graph_;
  std::vector<std::optional<Tensor<T>>> grads_;
};

template <typename T>
Gradients<T> backward(const Graph<T>& graph, const Var<T>& loss) {
  graph.check(loss);
  const auto& lnode = graph.node(loss.id);
  if (lnode.value.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(lnode.value.shape()));
  if (!graph.grad_enabled()) throw Error("backward: differentiation disabled on this graph");

  std::vector<std::optional<Tensor<T>>> grads(graph.size());
  grads[static_cast<std::size_t>(loss.id)] = Tensor<T>(lnode.value.shape(), T(1));
  std::vector<Tensor<T>*> gin;
  for (int id = loss.id; id >= 0; --id) {
    const auto& node = graph.node(id);
    auto& gout = grads[static_cast<std::size_t>(id)];
    if (!gout || !node.backward) continue;
    gin.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const auto& in = graph.node(node.inputs[i]);
      if (!in.requires_grad) continue;
      auto& slot = grads[static_cast<std::size_t>(node.inputs[i])];
      if (!slot) slot = Tensor<T>(in.value.shape());
      gin[i] = &*slot;
    }
    node.backward(*gout, gin);
  }
  return Gradients<T>(&graph, std::move(grads));
}

}  // namespace styleinv

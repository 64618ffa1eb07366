// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lddr/tensor.hpp"

namespace lddr {

/// A named weight with its gradient buffer. Frozen params (trainable == false)
/// never receive gradient and are never touched by an optimizer.
template <typename T>
struct BasicParam {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool trainable = true;

  BasicParam() = default;
  BasicParam(std::string n, BasicTensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = BasicTensor<T>(value.shape());
    grad.fill(T{0});
  }
};

using Param = BasicParam<float>;

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::uint32_t id = 0;

  const BasicTensor<T>& value() const { return graph->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return graph->requires_grad(*this); }
};

/// Reverse-mode tape. Every op appends one node holding its forward value and,
/// when any input requires a gradient, a closure that pushes the node's
/// gradient into its inputs. Nodes are processed in reverse creation order.
///
/// A graph is owned by one thread. Parameter gradients stay inside the graph
/// until collected, so independent graphs over the same params may run
/// concurrently and be reduced afterwards in a fixed order.
template <typename T>
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(BasicTensor<T> value) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    return Var<T>{this, last_id()};
  }

  /// Leaf whose gradient can be read back with grad().
  Var<T> input(BasicTensor<T> value, bool requires_grad) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.requires_grad = grad_enabled_ && requires_grad;
    return Var<T>{this, last_id()};
  }

  /// Borrowed view of a param value; gradient flows only if trainable.
  Var<T> param(BasicParam<T>& p) {
    Node& n = nodes_.emplace_back();
    n.borrowed = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_ && p.trainable;
    return Var<T>{this, last_id()};
  }

  /// Appends an op result. `backward` is kept only if some input needs grad.
  Var<T> emit(const char* op, BasicTensor<T> value, bool any_input_requires_grad,
              std::function<void(const BasicTensor<T>& grad_out)> backward) {
    if (!value.all_finite()) {
      throw NonFiniteError(std::string("non-finite value produced by ") + op +
                           " with shape " + shape_str(value.shape()));
    }
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.requires_grad = grad_enabled_ && any_input_requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    return Var<T>{this, last_id()};
  }

  const BasicTensor<T>& value(Var<T> v) const {
    const Node& n = nodes_[v.id];
    return n.borrowed ? *n.borrowed : n.owned;
  }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of `v`, allocated on first use.
  BasicTensor<T>& grad_buffer(Var<T> v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() != value(v).size() || n.grad.shape() != value(v).shape()) {
      n.grad = BasicTensor<T>(value(v).shape());
    }
    return n.grad;
  }

  /// Gradient of `v` after backward(); zeros if nothing reached it.
  BasicTensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.shape() == value(v).shape()) return n.grad;
    return BasicTensor<T>(value(v).shape());
  }

  /// Seeds d(loss)/d(loss) = 1 and runs the tape backwards.
  void backward(Var<T> loss, T seed = T{1}) {
    if (value(loss).size() != 1) {
      throw DimensionError("backward() needs a scalar loss, got shape " +
                           shape_str(value(loss).shape()));
    }
    if (!requires_grad(loss)) return;
    grad_buffer(loss)[0] += seed;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(n.grad);
    }
  }

  /// Visits (param, grad) for every trainable param leaf that received a
  /// gradient, in node creation order.
  template <typename F>
  void for_each_param_grad(F&& fn) const {
    for (const Node& n : nodes_) {
      if (n.param && n.requires_grad && n.grad.size() != 0) fn(*n.param, n.grad);
    }
  }

  /// Adds collected param gradients into BasicParam::grad.
  void accumulate_param_grads() {
    for_each_param_grad([](BasicParam<T>& p, const BasicTensor<T>& g) {
      if (p.grad.shape() != p.value.shape()) p.zero_grad();
      for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
    });
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> owned;
    const BasicTensor<T>* borrowed = nullptr;
    BasicTensor<T> grad;
    bool requires_grad = false;
    BasicParam<T>* param = nullptr;
    std::function<void(const BasicTensor<T>&)> backward;
  };

  std::uint32_t last_id() const { return static_cast<std::uint32_t>(nodes_.size() - 1); }

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

}  // namespace lddr

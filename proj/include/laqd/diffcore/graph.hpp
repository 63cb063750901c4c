// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <deque>
#include <vector>

#include "laqd/diffcore/tensor.hpp"

namespace laqd::diff {

/// A named model parameter. Frozen parameters enter graphs as constants and
/// never receive gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad.fill(0.0); }
};

class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; valid while the
/// owning graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of recorded operations. Nodes are appended in creation order, which
/// is a topological order; backward walks it in reverse and accumulates
/// gradients across fan-out.
class Graph {
 public:
  /// Receives the node's accumulated output gradient.
  using BackwardFn = std::function<void(const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf that requires grad but is not tied to a Param (tests, oracles).
  Var leaf(Tensor value);
  /// Leaf bound to a Param; frozen params become constants. After
  /// backward() the node gradient is added into p.grad.
  Var param(Param& p);

  /// Record an op result. `fn` runs only when some parent requires grad.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  /// Mutable gradient buffer of v, allocated on first use; nullptr when v
  /// does not require grad. Only meaningful inside backward functions.
  double* grad_buffer(Var v);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Param* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;  // stable references across push_back
  bool backward_done_ = false;
  Tensor zeros_;  // returned by grad() for nodes without a buffer
};

inline const Tensor& Var::value() const { return graph_->value(*this); }
inline const Tensor& Var::grad() const { return graph_->grad(*this); }
inline bool Var::requires_grad() const { return graph_->requires_grad(*this); }

}  // namespace laqd::diff

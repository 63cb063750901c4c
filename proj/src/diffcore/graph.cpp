// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/diffcore/graph.hpp"

#include <stdexcept>

namespace laqd::diff {

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::param(Param& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = p.trainable ? &p : nullptr;
  return push(std::move(n));
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : parents) {
    if (v.graph_ != this) throw std::logic_error("op mixes vars from different graphs");
    n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : parents) {
    if (v.graph_ != this) throw std::logic_error("op mixes vars from different graphs");
    n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  if (!n.grad.empty()) return n.grad;
  // Lazily sized zero tensor; const_cast keeps the public accessor const.
  auto& z = const_cast<Tensor&>(zeros_);
  if (z.shape() != n.value.shape()) z = Tensor(n.value.shape());
  return z;
}

double* Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad.data();
}

void Graph::backward(Var loss) {
  if (backward_done_) throw std::logic_error("backward() called twice on one graph");
  if (loss.graph_ != this) throw std::logic_error("loss belongs to another graph");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + shape_str(nodes_[loss.id_].value.shape()));
  }
  backward_done_ = true;
  if (!nodes_[loss.id_].requires_grad) return;
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param) n.param->grad.add_(n.grad);
  }
}

}  // namespace laqd::diff

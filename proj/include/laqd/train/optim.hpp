// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "laqd/diffcore/graph.hpp"
#include "laqd/train/config.hpp"

namespace laqd::train {

/// Linear warm-up from 0 to peak over warmup_steps, then cosine decay to 0
/// at total_steps. Update number t (1-based) uses lr_at(t).
double lr_at(double step, const OptimConfig& cfg);

/// AdamW with decoupled weight decay on matrix-shaped parameters.
class AdamW {
 public:
  AdamW(std::vector<diff::Param*> params, const OptimConfig& cfg);

  /// Global L2 norm of the current gradients.
  double grad_norm() const;
  /// Scales gradients to clip_norm when above it; returns true if it did.
  bool clip();
  /// One update with learning rate lr, then zeroes gradients.
  void step(double lr);

  std::size_t steps() const { return t_; }
  void set_steps(std::size_t t) { t_ = t; }
  const std::vector<diff::Param*>& params() const { return params_; }
  std::vector<diff::Tensor>& first_moments() { return m_; }
  std::vector<diff::Tensor>& second_moments() { return v_; }
  /// Rounds parameters and moments to float so that an f32 checkpoint taken
  /// now restores the exact state.
  void quantize();

 private:
  std::vector<diff::Param*> params_;
  OptimConfig cfg_;
  std::vector<diff::Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace laqd::train

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "laqd/diffcore/graph.hpp"
#include "laqd/diffcore/tensor.hpp"

namespace laqd::diff {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient of f at x, one coordinate at a time.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor). Relative to the
/// largest entry so that near-zero coordinates do not dominate.
double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-12);

struct ParamGradCheck {
  std::string name;
  std::size_t size = 0;
  double rel_error = 0.0;
  Tensor analytic;
  Tensor numeric;
};

/// Builds a scalar loss on the graph it is given. Called once with backward
/// and then twice per coordinate of every checked parameter, so it must be a
/// pure function of the parameter values.
using LossBuilder = std::function<Var(Graph&)>;

/// Compares accumulated parameter gradients with central differences.
/// Gradients of `params` are zeroed first and hold the analytic values after.
/// `floor` bounds the error denominator from below; it sits above the
/// central-difference noise (~1e-11 at h = 1e-5) so that a gradient which is
/// exactly zero (a key bias under softmax, say) does not divide noise by noise.
std::vector<ParamGradCheck> check_param_grads(const LossBuilder& build, const std::vector<Param*>& params,
                                              double h = 1e-5, double floor = 1e-8);

}  // namespace laqd::diff

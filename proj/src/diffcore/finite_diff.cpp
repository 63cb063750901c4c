// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/diffcore/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace laqd::diff {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step h must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  double scale = floor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return max_abs_diff(analytic, numeric) / scale;
}

std::vector<ParamGradCheck> check_param_grads(const LossBuilder& build, const std::vector<Param*>& params,
                                              double h, double floor) {
  for (Param* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(build(g));
  }
  std::vector<ParamGradCheck> out;
  for (Param* p : params) {
    const Tensor saved = p->value;
    auto f = [&](const Tensor& v) {
      p->value = v;
      Graph g;
      return build(g).value().item();
    };
    const Tensor numeric = finite_diff_grad(f, saved, h);
    p->value = saved;
    out.push_back({p->name, p->value.size(), relative_error(p->grad, numeric, floor), p->grad, numeric});
  }
  return out;
}

}  // namespace laqd::diff

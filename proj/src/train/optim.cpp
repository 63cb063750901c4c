// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/train/optim.hpp"

#include <cmath>
#include <numbers>

namespace laqd::train {

double lr_at(double step, const OptimConfig& cfg) {
  const double w = static_cast<double>(cfg.warmup_steps), s = static_cast<double>(cfg.total_steps);
  if (step <= 0.0) return 0.0;
  if (step < w) return cfg.peak_lr * step / w;
  if (step >= s) return 0.0;
  return 0.5 * cfg.peak_lr * (1.0 + std::cos(std::numbers::pi * (step - w) / (s - w)));
}

AdamW::AdamW(std::vector<diff::Param*> params, const OptimConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const diff::Param* p : params_) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

double AdamW::grad_norm() const {
  double ss = 0.0;
  for (const diff::Param* p : params_)
    for (double g : p->grad.values()) ss += g * g;
  return std::sqrt(ss);
}

bool AdamW::clip() {
  if (cfg_.clip_norm <= 0.0) return false;
  const double n = grad_norm();
  if (!(n > cfg_.clip_norm)) return false;
  const double s = cfg_.clip_norm / n;
  for (diff::Param* p : params_)
    for (double& g : p->grad.values()) g *= s;
  return true;
}

void AdamW::step(double lr) {
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    diff::Param& p = *params_[i];
    const bool decay = p.value.rank() >= 2;
    double* m = m_[i].data();
    double* v = v_[i].data();
    double* x = p.value.data();
    const double* g = p.grad.data();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
      x[j] -= lr * (update + (decay ? cfg_.weight_decay * x[j] : 0.0));
    }
    p.zero_grad();
  }
}

void AdamW::quantize() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    diff::round_to_float(params_[i]->value);
    diff::round_to_float(m_[i]);
    diff::round_to_float(v_[i]);
  }
}

}  // namespace laqd::train

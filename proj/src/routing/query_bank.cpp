// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/routing/query_bank.hpp"

#include <cmath>
#include <numbers>

namespace laqd::routing {

RoutingMode parse_routing_mode(const std::string& s) {
  if (s == "shared") return RoutingMode::shared;
  if (s == "soft") return RoutingMode::soft;
  if (s == "hard") return RoutingMode::hard;
  throw ConfigError("unknown routing mode '" + s + "' (expected shared, soft or hard)");
}

std::string to_string(RoutingMode m) {
  switch (m) {
    case RoutingMode::shared: return "shared";
    case RoutingMode::soft: return "soft";
    case RoutingMode::hard: return "hard";
  }
  return "?";
}

StVariant parse_st_variant(const std::string& s) {
  if (s == "paper") return StVariant::paper;
  if (s == "conventional") return StVariant::conventional;
  throw ConfigError("unknown st variant '" + s + "' (expected paper or conventional)");
}

std::string to_string(StVariant v) { return v == StVariant::paper ? "paper" : "conventional"; }

QueryBank::QueryBank(std::size_t entries, std::size_t length, std::size_t dim, diff::Rng& rng, std::string name)
    : entries_(entries), length_(length), dim_(dim) {
  if (entries < 1 || length < 1 || dim < 1) throw ConfigError("query bank dimensions must be >= 1");
  bank_ = Param(std::move(name), diff::float_normal({entries, length, dim}, kInitStd, rng));
}

Var QueryBank::flat(Graph& g) { return diff::reshape(g.param(bank_), {entries_, length_ * dim_}); }

StaticQueries::StaticQueries(std::size_t length, std::size_t dim, diff::Rng& rng, std::string name)
    : length_(length), dim_(dim) {
  if (length < 1 || dim < 1) throw ConfigError("query dimensions must be >= 1");
  // Same draw order and shape as a one-entry bank.
  queries_ = Param(std::move(name), diff::float_normal({1, length, dim}, QueryBank::kInitStd, rng));
}

Var StaticQueries::tiled(Graph& g, std::size_t batch) {
  Var row = diff::reshape(g.param(queries_), {1, length_ * dim_});
  return diff::reshape(diff::gather_rows(row, std::vector<std::size_t>(batch, 0)), {batch * length_, dim_});
}

Var mix_soft(Var bank, Var logits) {
  if (logits.cols() != bank.rows()) {
    throw diff::ShapeError("mix_soft: logits " + diff::shape_str(logits.shape()) + " vs bank " +
                           diff::shape_str(bank.shape()));
  }
  return diff::matmul(diff::softmax_rows(logits), bank);
}

Var select_hard_st(Var bank, Var logits, const std::vector<std::size_t>& k, StVariant variant) {
  if (k.size() != logits.rows()) throw diff::ShapeError("select_hard_st: one index per logits row required");
  for (auto i : k) {
    if (i >= bank.rows()) throw std::out_of_range("select_hard_st: index outside bank");
  }
  Var hard = diff::gather_rows(bank, k);
  if (variant == StVariant::conventional) hard = diff::stop_gradient(hard);
  Var soft = mix_soft(bank, logits);
  // soft - sg(soft) is exactly zero elementwise, so the forward is the row.
  return diff::add(hard, diff::sub(soft, diff::stop_gradient(soft)));
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  std::vector<std::size_t> out(logits.rows(), 0);
  for (std::size_t r = 0; r < logits.rows(); ++r)
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits.at(r, j) > logits.at(r, out[r])) out[r] = j;
  return out;
}

double p_tf(double step, const TFSchedule& sched) {
  if (!(sched.total_steps > 0.0)) throw ConfigError("teacher forcing schedule needs total_steps > 0");
  if (!(sched.anneal_fraction > 0.0)) throw ConfigError("routing.anneal_fraction must be > 0");
  if (step < 0.0) throw std::invalid_argument("p_tf: negative step");
  const double x = std::min(step / (sched.anneal_fraction * sched.total_steps), 1.0);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

RoutingDecision route(RoutingMode mode, std::span<const double> logits, int label, double step,
                      const TFSchedule& sched, diff::Rng& rng, bool forcing) {
  RoutingDecision d;
  d.mode = mode;
  if (mode == RoutingMode::shared) return d;
  const std::size_t k = logits.size();
  if (label < -1 || label >= static_cast<int>(k)) {
    throw LabelError("label " + std::to_string(label) + " outside [-1, " + std::to_string(k) + ")");
  }
  const Tensor row = Tensor::matrix(1, k, {logits.begin(), logits.end()});
  double mx = row[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  d.pi.resize(k);
  for (std::size_t j = 0; j < k; ++j) z += d.pi[j] = std::exp(logits[j] - mx);
  for (auto& p : d.pi) p /= z;
  d.k_used = argmax_rows(row)[0];
  if (forcing && mode == RoutingMode::hard && label >= 0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < p_tf(step, sched)) {
      d.k_used = static_cast<std::size_t>(label);
      d.teacher_forced = true;
    }
  }
  return d;
}

RoutedQueries route_batch(Graph& g, QueryBank& bank, Var logits, const std::vector<int>& labels, RoutingMode mode,
                          StVariant variant, double step, const TFSchedule& sched, diff::Rng& rng,
                          bool forcing) {
  const std::size_t batch = labels.size();
  const std::size_t L = bank.length(), d = bank.dim();
  RoutedQueries out;
  Var flat = bank.flat(g);
  if (mode == RoutingMode::shared) {
    if (bank.entries() != 1) throw ConfigError("shared routing needs a one-entry bank");
    out.decisions.assign(batch, RoutingDecision{});
    out.queries = diff::reshape(diff::gather_rows(flat, std::vector<std::size_t>(batch, 0)), {batch * L, d});
    return out;
  }
  if (logits.rows() != batch || logits.cols() != bank.entries()) {
    throw diff::ShapeError("route_batch: logits " + diff::shape_str(logits.shape()) + " for " +
                           std::to_string(batch) + " samples and " + std::to_string(bank.entries()) + " entries");
  }
  const Tensor& lv = logits.value();
  std::vector<std::size_t> k(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    out.decisions.push_back(route(mode, {lv.data() + b * lv.cols(), lv.cols()}, labels[b], step, sched, rng, forcing));
    k[b] = out.decisions.back().k_used;
  }
  Var q = mode == RoutingMode::soft ? mix_soft(flat, logits) : select_hard_st(flat, logits, k, variant);
  out.queries = diff::reshape(q, {batch * L, d});
  return out;
}

}  // namespace laqd::routing

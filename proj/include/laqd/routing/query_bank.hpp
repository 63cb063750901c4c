// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Per-language query bank with soft mixing, straight-through hard selection
// and teacher-forced routing.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "laqd/diffcore/graph.hpp"
#include "laqd/diffcore/ops.hpp"
#include "laqd/diffcore/random.hpp"
#include "laqd/util/errors.hpp"

namespace laqd::routing {

using diff::Graph;
using diff::Param;
using diff::Tensor;
using diff::Var;

enum class RoutingMode { shared, soft, hard };
enum class StVariant { paper, conventional };

RoutingMode parse_routing_mode(const std::string& s);
std::string to_string(RoutingMode m);
StVariant parse_st_variant(const std::string& s);
std::string to_string(StVariant v);

/// K x L x d_llm learnable queries, initialised N(0, 0.02^2).
class QueryBank {
 public:
  static constexpr double kInitStd = 0.02;

  QueryBank(std::size_t entries, std::size_t length, std::size_t dim, diff::Rng& rng,
            std::string name = "query_bank.bank");

  std::size_t entries() const { return entries_; }
  std::size_t length() const { return length_; }
  std::size_t dim() const { return dim_; }
  Param& param() { return bank_; }
  /// Binds the bank as an entries x (length*dim) matrix.
  Var flat(Graph& g);

 private:
  std::size_t entries_, length_, dim_;
  Param bank_;
};

/// Bank-free static queries (one L x d_llm set), the single-query baseline.
class StaticQueries {
 public:
  StaticQueries(std::size_t length, std::size_t dim, diff::Rng& rng, std::string name = "query_bank.bank");
  Param& param() { return queries_; }
  /// The query set for each of `batch` samples, (batch*L) x d.
  Var tiled(Graph& g, std::size_t batch);

 private:
  std::size_t length_, dim_;
  Param queries_;
};

/// sum_k softmax(g)_k Q^(k) per row of g. bank: K x (L*d), logits: B x K.
/// Returns B x (L*d).
Var mix_soft(Var bank, Var logits);

/// Forward is bank row k[b] exactly. Backward follows the chosen ST form:
///   paper:        Q_hard + (Q_soft - sg(Q_soft))
///   conventional: sg(Q_hard) + Q_soft - sg(Q_soft)
Var select_hard_st(Var bank, Var logits, const std::vector<std::size_t>& k, StVariant variant);

/// Lowest-index argmax of each row.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

struct TFSchedule {
  double total_steps = 0.0;
  double anneal_fraction = 0.5;
};

/// 0.5 (1 + cos(pi min(s / (f S), 1))).
double p_tf(double step, const TFSchedule& sched);

struct RoutingDecision {
  RoutingMode mode = RoutingMode::shared;
  std::vector<double> pi;  // empty in shared mode
  std::size_t k_used = 0;
  bool teacher_forced = false;
};

/// Routing for a single utterance. Draws one uniform from rng only when a
/// hard-mode sample has a label and forcing is enabled (training).
RoutingDecision route(RoutingMode mode, std::span<const double> logits, int label, double step,
                      const TFSchedule& sched, diff::Rng& rng, bool forcing = true);

struct RoutedQueries {
  Var queries;  // (B*L) x d
  std::vector<RoutingDecision> decisions;
};

/// Routes a batch and assembles its queries. `logits` (B x K) is unused in
/// shared mode and may be invalid there.
RoutedQueries route_batch(Graph& g, QueryBank& bank, Var logits, const std::vector<int>& labels, RoutingMode mode,
                          StVariant variant, double step, const TFSchedule& sched, diff::Rng& rng,
                          bool forcing = true);

}  // namespace laqd::routing

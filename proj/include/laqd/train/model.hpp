// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// The full system: frozen stubs, language gate, query bank, projector and
// the three loss terms, composed into one forward pass per batch.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "laqd/gating/gate.hpp"
#include "laqd/losses/distill.hpp"
#include "laqd/projector/qformer.hpp"
#include "laqd/routing/query_bank.hpp"
#include "laqd/stubs/frozen_stubs.hpp"
#include "laqd/synthdata/corpus.hpp"
#include "laqd/train/config.hpp"

namespace laqd::train {

using diff::Graph;
using diff::Param;
using diff::Var;

struct ForwardOptions {
  double step = 0.0;           // routing step for the teacher-forcing schedule
  bool teacher_forcing = false;
  diff::Rng* routing_rng = nullptr;  // required when teacher_forcing is set
};

struct ForwardResult {
  losses::LossBreakdown loss;
  Var logits;   // B x K
  Var queries;  // (B*L) x d_llm, after routing
  Var z;        // (B*L) x d_llm
  Var y;        // (B*N) x d_llm
  std::vector<routing::RoutingDecision> decisions;
};

/// Named group of trainable parameters, as reported by gradcheck.
struct ParamGroup {
  std::string name;
  std::vector<Param*> params;
};

class Model {
 public:
  /// Dimensions come from cfg.data, which must describe the corpus used.
  explicit Model(const TrainConfig& cfg);

  ForwardResult forward(Graph& g, const synth::Batch& batch, const ForwardOptions& opt);

  std::vector<Param*> trainable();
  std::vector<Param*> frozen() { return stubs_.params(); }
  std::vector<ParamGroup> groups();
  std::uint64_t frozen_hash() { return stubs_.hash(); }
  std::uint32_t pad_id() const { return static_cast<std::uint32_t>(cfg_.data.vocab); }
  const TrainConfig& config() const { return cfg_; }
  gating::Gate& gate() { return *gate_; }
  routing::QueryBank* bank() { return bank_ ? &*bank_ : nullptr; }
  projector::QFormer& qformer() { return qformer_; }
  stubs::FrozenStubs& stubs() { return stubs_; }
  /// Finds a trainable or frozen parameter by name.
  Param* find(const std::string& name);

 private:
  TrainConfig cfg_;
  stubs::FrozenStubs stubs_;
  std::unique_ptr<gating::Gate> gate_;
  std::optional<routing::QueryBank> bank_;
  std::optional<routing::StaticQueries> static_;
  projector::QFormer qformer_;
};

stubs::StubConfig stub_config(const TrainConfig& cfg);

/// Validation-set summary. Per-language values are keyed by true language.
struct EvalSummary {
  double l_in = 0.0;
  double l_out = 0.0;
  double l_lid = 0.0;  // mean over labelled samples, 0 when none
  double total = 0.0;
  std::optional<double> lid_accuracy;
  std::size_t samples = 0;
  std::map<int, double> l_in_by_language;
  std::map<int, std::size_t> count_by_language;
  std::vector<std::size_t> route_histogram;  // samples per bank entry used
};

/// Evaluates without teacher forcing in fixed-order batches.
EvalSummary evaluate(Model& model, const std::vector<synth::Utterance>& split, std::size_t batch_size);

}  // namespace laqd::train

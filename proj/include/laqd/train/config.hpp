// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Training configuration: every module's knobs under flat dotted keys, read
// from TOML-style text and overridable one key at a time.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laqd/gating/gate.hpp"
#include "laqd/losses/distill.hpp"
#include "laqd/projector/qformer.hpp"
#include "laqd/routing/query_bank.hpp"
#include "laqd/synthdata/corpus.hpp"
#include "laqd/util/errors.hpp"

namespace laqd::train {

struct OptimConfig {
  double peak_lr = 3e-3;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 6000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

struct ValidationConfig {
  std::size_t every_n_steps = 250;
  std::size_t patience = 6;
  std::size_t batch_size = 64;
};

struct Seeds {
  std::uint64_t data = 1;     // batch order
  std::uint64_t model = 1;    // trainable initialisation
  std::uint64_t frozen = 7;   // frozen stubs, must match the corpus
  std::uint64_t routing = 1;  // teacher-forcing draws
};

struct TrainConfig {
  synth::GenConfig data;
  gating::GateConfig gate;
  routing::RoutingMode routing_mode = routing::RoutingMode::hard;
  double anneal_fraction = 0.5;
  /// Shared mode only: a bank-free static query set instead of a one-entry bank.
  bool static_queries = false;
  routing::StVariant st_variant = routing::StVariant::paper;
  projector::ProjectorConfig projector;
  std::size_t d_llm = 64;
  std::size_t llm_layers = 2;
  std::size_t llm_heads = 4;
  std::size_t llm_ffn = 128;
  std::size_t llm_max_frames = 512;
  // lambda_lid 0.5 rather than 0.1: at 0.1 the weighted LID term starts 13x
  // below L_IN and the gate drifts off the language labels once teacher
  // forcing has annealed.
  losses::LossWeights loss{1.0, 1.0, 0.5};
  losses::L2Mode l2 = losses::L2Mode::squared;
  OptimConfig optim;
  std::size_t batch_size = 32;
  std::size_t log_every = 50;
  ValidationConfig validation;
  Seeds seed;
  std::string corpus_path;
  std::string out_dir = "laqd_run";
  bool wall_time = false;

  void validate() const;
};

/// Sets one dotted key from its text form. Unknown keys and malformed
/// values raise ConfigError naming the key.
void set_key(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Applies "key=value".
void apply_override(TrainConfig& cfg, const std::string& assignment);
/// Canonical `key = value` lines, one per key, in a fixed order.
std::string dump_config(const TrainConfig& cfg);
/// Every known key in dump order.
std::vector<std::string> config_keys();

/// Parses TOML-style text: `key = value` lines, `# comments`, and `[section]`
/// headers that prefix the keys below them.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

}  // namespace laqd::train

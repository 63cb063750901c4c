// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "laqd/train/checkpoint.hpp"
#include "laqd/train/model.hpp"
#include "laqd/train/optim.hpp"

namespace laqd::train {

/// Non-finite loss during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  /// Resume from this checkpoint (written by an earlier run of the same config).
  std::string resume;
  /// Stop after this many total optimizer steps, as if preempted. 0 = no limit.
  std::size_t stop_after = 0;
  /// Write metrics/checkpoints under cfg.out_dir.
  bool write_files = true;
  /// Progress sink for validation events, empty to stay quiet.
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  std::size_t steps = 0;
  std::size_t best_step = 0;
  bool early_stopped = false;
  EvalSummary best;
  EvalSummary last;
  std::uint64_t frozen_hash_before = 0;
  std::uint64_t frozen_hash_after = 0;
  std::string metrics_path;
  std::string best_checkpoint;
  std::string latest_checkpoint;
};

/// Trains on corpus.train, validating on corpus.val. The config's data
/// section is replaced by the corpus's own generation config.
TrainResult train(const TrainConfig& cfg, const synth::Corpus& corpus, const TrainOptions& opt = {});

/// Loads corpus from cfg.corpus_path (error if missing) and trains.
TrainResult train_from_config(const TrainConfig& cfg, const TrainOptions& opt = {});

/// Snapshot of a model (and optionally its optimizer) at a step.
Checkpoint make_checkpoint(Model& model, AdamW* adam, std::uint64_t step, const std::string& state);

/// Rebuilds the model stored in a checkpoint, frozen stubs included.
std::unique_ptr<Model> load_model(const Checkpoint& ck);

/// JSON rendering of an evaluation summary.
std::string summary_json(const EvalSummary& s);

}  // namespace laqd::train

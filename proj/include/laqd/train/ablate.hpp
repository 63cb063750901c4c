// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Ablation harness: a list of named override sets, each trained over a list
// of seeds on an in-memory corpus generated from its own data section.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "laqd/train/config.hpp"
#include "laqd/train/model.hpp"

namespace laqd::train {

struct AblationRun {
  std::string name;
  std::vector<std::string> overrides;  // "key=value"
};

struct AblationMatrix {
  std::vector<std::string> base;  // applied before every run's overrides
  std::vector<AblationRun> runs;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir = "laqd_ablate";
};

/// JSON matrix: {"base": {...}, "runs": [{"name": .., "set": {...}}],
/// "seeds": [..] or "n_seeds": n, "out_dir": ".."}. Values may be strings,
/// numbers, booleans or arrays.
AblationMatrix parse_matrix(const std::string& json_text);
AblationMatrix load_matrix(const std::string& path);

struct AblationRow {
  std::string name;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t steps = 0;
  std::size_t best_step = 0;
  EvalSummary best;  // the retained (best) checkpoint
};

struct AblationTable {
  std::vector<AblationRow> rows;
  bool ok() const;
  std::vector<std::string> errors() const;
  std::string json() const;
  std::string text() const;
  /// Row for (name, seed), or nullptr.
  const AblationRow* find(const std::string& name, std::uint64_t seed) const;
};

/// Config for one member run; the seed sets seed.data, seed.model and
/// seed.routing.
TrainConfig member_config(const AblationMatrix& m, const AblationRun& run, std::uint64_t seed);

/// Runs every member; failures are recorded in their rows and the rest
/// continue. Writes ablate.json and ablate.txt under out_dir when
/// write_files is set.
AblationTable run_ablation(const AblationMatrix& m, bool write_files = true,
                           const std::function<void(const std::string&)>& log = {});

}  // namespace laqd::train

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference audit of every trainable parameter group in the full
// model, at tiny dimensions.

#pragma once

#include <string>
#include <vector>

#include "laqd/train/config.hpp"

namespace laqd::train {

struct GradcheckRow {
  std::string group;
  std::string mode;    // routing mode and gate variant of the run
  std::string method;  // "finite-diff" or "analytic"
  std::size_t params = 0;
  double rel_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  double tolerance = 1e-4;
  double seconds = 0.0;
  bool pass() const;
  std::vector<std::string> offenders() const;
  std::string table() const;
};

/// Tiny defaults: ~1-2k trainable parameters.
TrainConfig gradcheck_config();

/// Checks soft and shared modes with both gates by central differences, and
/// hard mode by the straight-through identity.
GradcheckReport run_gradcheck(const TrainConfig& cfg, double tolerance = 1e-4);

}  // namespace laqd::train

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

namespace laqd {

/// Invalid configuration value or combination.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Language label outside {-1, 0..K-1}.
class LabelError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

}  // namespace laqd

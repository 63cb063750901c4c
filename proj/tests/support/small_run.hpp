// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Small end-to-end configurations that train in seconds.

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "laqd/train/config.hpp"

namespace laqd::testing {

inline train::TrainConfig small_config(const std::string& out_dir) {
  train::TrainConfig c;
  c.data.languages = 3;
  c.data.weights = {3.0, 1.0, 1.0};
  c.data.vocab = 16;
  c.data.d_speech = 8;
  c.data.frames_per_token = 4;
  c.data.min_tokens = 4;
  c.data.max_tokens = 6;
  c.data.n_train = 96;
  c.data.n_val = 24;
  c.gate.channels = 8;
  c.gate.hidden = 8;
  c.projector.n_layers = 1;
  c.projector.n_heads = 2;
  c.projector.d_model = 16;
  c.projector.length = 8;
  c.d_llm = 16;
  c.llm_layers = 1;
  c.llm_heads = 2;
  c.llm_ffn = 16;
  c.llm_max_frames = 64;
  c.batch_size = 8;
  c.log_every = 10;
  c.optim.warmup_steps = 10;
  c.optim.total_steps = 60;
  c.validation.every_n_steps = 20;
  c.validation.batch_size = 10;
  c.out_dir = out_dir;
  return c;
}

inline std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("laqd_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace laqd::testing

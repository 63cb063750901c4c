// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint file: "LAQD", u32 version, u64 step, length-prefixed config
// text, then the parameter records, the optimizer-moment records (each
// section preceded by a u32 record count) and finally the opaque
// length-prefixed rng/trainer state. A record is {u16 name length, name,
// u8 rank, u32 dims[rank], f32 little-endian row-major data}.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laqd/diffcore/tensor.hpp"
#include "laqd/util/binary_io.hpp"

namespace laqd::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  diff::Tensor value;
};

struct Checkpoint {
  std::uint64_t step = 0;
  std::string config;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> moments;
  std::string state;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace laqd::train

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "laqd/diffcore/tensor.hpp"

namespace laqd::diff {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

Tensor normal_tensor(Shape shape, double sd, Rng& rng);
/// normal_tensor rounded to float precision, so that checkpoints (stored as
/// f32) reproduce initial values exactly.
Tensor float_normal(Shape shape, double sd, Rng& rng);

/// rows x cols matrix with orthonormal columns (rows >= cols), from the QR
/// factorisation of a Gaussian matrix with sign-fixed R diagonal.
Tensor orthonormal(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace laqd::diff

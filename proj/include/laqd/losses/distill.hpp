// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Input distillation (audio tail vs transcript head), output distillation at
// the last valid token, and their weighted total.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "laqd/diffcore/graph.hpp"
#include "laqd/diffcore/ops.hpp"
#include "laqd/util/errors.hpp"

namespace laqd::losses {

using diff::SeqLayout;
using diff::Var;

/// Raised when a transcript is longer than the query sequence.
class CapacityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class L2Mode { squared, root };

L2Mode parse_l2_mode(const std::string& s);
std::string to_string(L2Mode m);

/// z: (B*L) x d, y: (B*N) x d with tokens valid per `tokens`. For each
/// sample the N_b valid transcript rows are matched with the last N_b query
/// rows; distances are summed, divided by N_b and averaged over the batch.
Var input_distill(Var z, std::size_t length, Var y, const SeqLayout& tokens, L2Mode mode = L2Mode::squared);

/// h_sp: (B*L) x d student states, h_tx: (B*N) x d teacher states (already
/// detached). Compares h_sp at row L-1 with h_tx at row N_b-1.
Var output_distill(Var h_sp, std::size_t length, Var h_tx, const SeqLayout& tokens, L2Mode mode = L2Mode::squared);

struct LossWeights {
  double lambda_in = 1.0;
  double lambda_out = 1.0;
  double lambda_lid = 0.1;

  void validate() const;
};

struct LossBreakdown {
  Var l_in, l_out, l_lid, total;
  double in() const { return l_in.value().item(); }
  double out() const { return l_out.value().item(); }
  double lid() const { return l_lid.value().item(); }
  double value() const { return total.value().item(); }
};

LossBreakdown total_loss(Var l_in, Var l_out, Var l_lid, const LossWeights& w);

}  // namespace laqd::losses

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/losses/distill.hpp"

namespace laqd::losses {

namespace {

Var distances(Var a, Var b, L2Mode mode) {
  Var d = diff::sq_dist_rows(a, b);
  return mode == L2Mode::root ? diff::sqrt(d) : d;
}

void check_rows(Var x, std::size_t rows, const char* what) {
  if (x.rows() != rows) {
    throw diff::ShapeError(std::string(what) + ": got " + diff::shape_str(x.shape()) + ", expected " +
                           std::to_string(rows) + " rows");
  }
}

}  // namespace

L2Mode parse_l2_mode(const std::string& s) {
  if (s == "squared") return L2Mode::squared;
  if (s == "root") return L2Mode::root;
  throw ConfigError("unknown loss.l2 '" + s + "' (expected squared or root)");
}

std::string to_string(L2Mode m) { return m == L2Mode::squared ? "squared" : "root"; }

Var input_distill(Var z, std::size_t length, Var y, const SeqLayout& tokens, L2Mode mode) {
  tokens.check();
  const std::size_t B = tokens.batch, N = tokens.length, L = length;
  check_rows(z, B * L, "input_distill z");
  check_rows(y, B * N, "input_distill y");
  std::vector<std::size_t> zr, yr;
  std::vector<double> w;
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t n = tokens.valid[b];
    if (n == 0) throw std::invalid_argument("input_distill: sample " + std::to_string(b) + " has no tokens");
    if (n > L) {
      throw CapacityError("transcript of " + std::to_string(n) + " tokens exceeds L = " + std::to_string(L) +
                          " query tokens; increase projector.L");
    }
    for (std::size_t t = 0; t < n; ++t) {
      zr.push_back(b * L + L - n + t);
      yr.push_back(b * N + t);
      w.push_back(1.0 / (static_cast<double>(n) * static_cast<double>(B)));
    }
  }
  Var d = distances(diff::gather_rows(z, std::move(zr)), diff::gather_rows(y, std::move(yr)), mode);
  return diff::weighted_sum(d, std::move(w));
}

Var output_distill(Var h_sp, std::size_t length, Var h_tx, const SeqLayout& tokens, L2Mode mode) {
  tokens.check();
  const std::size_t B = tokens.batch, N = tokens.length, L = length;
  check_rows(h_sp, B * L, "output_distill h_sp");
  check_rows(h_tx, B * N, "output_distill h_tx");
  std::vector<std::size_t> sr, tr;
  for (std::size_t b = 0; b < B; ++b) {
    if (tokens.valid[b] == 0) throw std::invalid_argument("output_distill: sample " + std::to_string(b) + " has no tokens");
    sr.push_back(b * L + L - 1);
    tr.push_back(b * N + tokens.valid[b] - 1);
  }
  Var d = distances(diff::gather_rows(h_sp, std::move(sr)), diff::gather_rows(h_tx, std::move(tr)), mode);
  return diff::weighted_sum(d, std::vector<double>(B, 1.0 / static_cast<double>(B)));
}

void LossWeights::validate() const {
  if (lambda_in < 0.0 || lambda_out < 0.0 || lambda_lid < 0.0) throw ConfigError("loss weights must be >= 0");
}

LossBreakdown total_loss(Var l_in, Var l_out, Var l_lid, const LossWeights& w) {
  w.validate();
  Var t = diff::add(diff::add(diff::scale(l_in, w.lambda_in), diff::scale(l_out, w.lambda_out)),
                    diff::scale(l_lid, w.lambda_lid));
  return {l_in, l_out, l_lid, t};
}

}  // namespace laqd::losses

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "laqd/diffcore/graph.hpp"

namespace laqd::diff {

/// Batch of variable-length sequences stacked along rows: sample b occupies
/// rows [b*length, (b+1)*length), the first valid[b] of which are real.
struct SeqLayout {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::size_t> valid;

  std::size_t rows() const { return batch * length; }
  void check() const;
};

/// Output layout of a valid (unpadded) 1-D convolution. A position is valid
/// only when its whole receptive window lies inside the valid input prefix.
SeqLayout conv_output_layout(const SeqLayout& in, std::size_t kernel, std::size_t stride);

struct AttentionSpec {
  std::size_t batch = 0;
  std::size_t q_len = 0;
  std::size_t k_len = 0;  // padded key length per sample
  std::size_t heads = 1;
  std::vector<std::size_t> k_valid;  // keys at index >= k_valid[b] are masked
  bool causal = false;               // query i sees keys j <= i
};

// Elementwise and linear algebra. Matrix ops require rank-2 (rank-1 acts
// as a row vector).
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// x (m x n) + bias broadcast over rows; bias holds n values.
Var add_bias(Var x, Var bias);
Var reshape(Var a, Shape shape);
Var stop_gradient(Var a);

// Reductions.
Var sum(Var a);
Var mean(Var a);
/// sum_i w[i] * a[i] over the flattened values.
Var weighted_sum(Var a, std::vector<double> w);

// Row-wise normalisations and nonlinearities.
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Var x);
Var tanh(Var x);
/// Elementwise sqrt(x + eps).
Var sqrt(Var x, double eps = 1e-12);

// Indexing.
/// out[i] = x[i, cols[i]].
Var pick(Var x, std::vector<std::size_t> cols);
Var gather_rows(Var x, std::vector<std::size_t> rows);
Var concat_rows(const std::vector<Var>& parts);

// Distances.
/// out[i] = ||a_i - b_i||^2 per row.
Var sq_dist_rows(Var a, Var b);
/// Sum of squared elementwise differences.
Var sq_l2(Var a, Var b);

// Sequence ops.
/// Unfolds windows: row (b, t) of the result is the concatenation of input
/// rows (b, t*stride + j) for j < kernel. Windows past the padded length are
/// dropped; see conv_output_layout for validity.
Var im2col1d(Var x, const SeqLayout& in, std::size_t kernel, std::size_t stride);
/// Mean over the valid rows of each sample -> batch x cols.
Var masked_mean_rows(Var x, const SeqLayout& layout);
/// Softmax of a (batch*length) x 1 score column within each sample's valid
/// prefix; padded rows get exactly zero weight.
Var segment_softmax(Var scores, const SeqLayout& layout);
/// sum_t w[b,t] * x[b,t,:] -> batch x cols.
Var segment_weighted_sum(Var w, Var x, const SeqLayout& layout);
/// Scaled dot-product multi-head attention with key masking.
/// q: (batch*q_len) x D, k and v: (batch*k_len) x D.
Var attention(Var q, Var k, Var v, const AttentionSpec& spec);

/// Gradient-rule fault injection for harness tests. While a guard is alive
/// the chosen rule's input gradient is scaled by `factor`.
enum class FaultSite { none, gelu, matmul };

class ScopedGradientFault {
 public:
  ScopedGradientFault(FaultSite site, double factor);
  ~ScopedGradientFault();
  ScopedGradientFault(const ScopedGradientFault&) = delete;
  ScopedGradientFault& operator=(const ScopedGradientFault&) = delete;

 private:
  FaultSite prev_site_;
  double prev_factor_;
};

}  // namespace laqd::diff

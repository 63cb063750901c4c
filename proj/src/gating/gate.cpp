// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/gating/gate.hpp"

#include <cmath>

namespace laqd::gating {

namespace {

using diff::Tensor;

Param weight(std::string name, std::size_t in, std::size_t out, diff::Rng& rng) {
  return Param(std::move(name), diff::float_normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

Param bias(std::string name, std::size_t n) { return Param(std::move(name), Tensor({n}, 0.0)); }

void check_labels(const std::vector<int>& labels, std::size_t batch, std::size_t k) {
  if (labels.size() != batch) throw std::invalid_argument("label count does not match batch");
  for (int l : labels) {
    if (l < -1 || l >= static_cast<int>(k)) {
      throw LabelError("label " + std::to_string(l) + " outside [-1, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace

GateVariant parse_gate_variant(const std::string& s) {
  if (s == "conv") return GateVariant::conv;
  if (s == "attnpool") return GateVariant::attnpool;
  throw std::invalid_argument("unknown gate variant '" + s + "' (expected conv or attnpool)");
}

std::string to_string(GateVariant v) { return v == GateVariant::conv ? "conv" : "attnpool"; }

GateConv::GateConv(std::size_t d_speech, std::size_t k, const GateConfig& cfg, diff::Rng& rng)
    : Gate(k), kernel_(cfg.kernel), stride_(cfg.stride) {
  const std::size_t c = cfg.channels;
  w1_ = weight("gate.conv.conv1.weight", cfg.kernel * d_speech, c, rng);
  b1_ = bias("gate.conv.conv1.bias", c);
  w2_ = weight("gate.conv.conv2.weight", cfg.kernel * c, c, rng);
  b2_ = bias("gate.conv.conv2.bias", c);
  wo_ = weight("gate.conv.head.weight", c, k, rng);
  bo_ = bias("gate.conv.head.bias", k);
}

std::size_t GateConv::min_frames() const { return kernel_ + (kernel_ - 1) * stride_; }

Var GateConv::forward(Graph& g, Var h, const SeqLayout& layout) {
  layout.check();
  const SeqLayout l1 = diff::conv_output_layout(layout, kernel_, stride_);
  const SeqLayout l2 = diff::conv_output_layout(l1, kernel_, stride_);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    if (l2.valid[b] == 0) {
      throw LengthError("gate conv needs at least " + std::to_string(min_frames()) + " frames, sample " +
                        std::to_string(b) + " has " + std::to_string(layout.valid[b]));
    }
  }
  Var x = diff::im2col1d(h, layout, kernel_, stride_);
  x = diff::gelu(diff::add_bias(diff::matmul(x, g.param(w1_)), g.param(b1_)));
  x = diff::im2col1d(x, l1, kernel_, stride_);
  x = diff::gelu(diff::add_bias(diff::matmul(x, g.param(w2_)), g.param(b2_)));
  Var pooled = diff::masked_mean_rows(x, l2);
  return diff::add_bias(diff::matmul(pooled, g.param(wo_)), g.param(bo_));
}

GateAttnPool::GateAttnPool(std::size_t d_speech, std::size_t k, const GateConfig& cfg, diff::Rng& rng) : Gate(k) {
  query_ = weight("gate.attnpool.query", d_speech, 1, rng);
  w1_ = weight("gate.attnpool.mlp1.weight", d_speech, cfg.hidden, rng);
  b1_ = bias("gate.attnpool.mlp1.bias", cfg.hidden);
  w2_ = weight("gate.attnpool.mlp2.weight", cfg.hidden, k, rng);
  b2_ = bias("gate.attnpool.mlp2.bias", k);
}

Var GateAttnPool::forward(Graph& g, Var h, const SeqLayout& layout) {
  layout.check();
  for (std::size_t b = 0; b < layout.batch; ++b) {
    if (layout.valid[b] == 0) throw LengthError("gate attnpool: sample " + std::to_string(b) + " has no frames");
  }
  weights_ = diff::segment_softmax(diff::matmul(h, g.param(query_)), layout);
  Var u = diff::segment_weighted_sum(weights_, h, layout);
  Var z = diff::gelu(diff::add_bias(diff::matmul(u, g.param(w1_)), g.param(b1_)));
  return diff::add_bias(diff::matmul(z, g.param(w2_)), g.param(b2_));
}

std::unique_ptr<Gate> make_gate(const GateConfig& cfg, std::size_t d_speech, std::size_t k, diff::Rng& rng) {
  if (k < 1) throw std::invalid_argument("gate needs at least one language");
  if (cfg.variant == GateVariant::conv) return std::make_unique<GateConv>(d_speech, k, cfg, rng);
  return std::make_unique<GateAttnPool>(d_speech, k, cfg, rng);
}

Var lid_loss(Var logits, const std::vector<int>& labels) {
  const std::size_t batch = logits.rows(), k = logits.cols();
  check_labels(labels, batch, k);
  std::size_t n_valid = 0;
  for (int l : labels) n_valid += l >= 0;
  std::vector<std::size_t> cols(batch, 0);
  std::vector<double> w(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0) continue;
    cols[b] = static_cast<std::size_t>(labels[b]);
    w[b] = -1.0 / static_cast<double>(n_valid);
  }
  // With no labelled sample every weight is zero: value 0, gradient 0.
  return diff::weighted_sum(diff::pick(diff::log_softmax_rows(logits), std::move(cols)), std::move(w));
}

std::size_t argmax_row(const diff::Tensor& t, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < t.cols(); ++j) {
    if (t.at(r, j) > t.at(r, best)) best = j;
  }
  return best;
}

void LidTally::add(const diff::Tensor& logits, const std::vector<int>& labels) {
  check_labels(labels, logits.rows(), logits.cols());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0) continue;
    ++total;
    correct += argmax_row(logits, b) == static_cast<std::size_t>(labels[b]);
  }
}

std::optional<double> LidTally::accuracy() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::optional<double> lid_accuracy(const diff::Tensor& logits, const std::vector<int>& labels) {
  LidTally t;
  t.add(logits, labels);
  return t.accuracy();
}

}  // namespace laqd::gating

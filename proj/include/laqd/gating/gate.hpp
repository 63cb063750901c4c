// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Language gate: maps encoder states to per-utterance language logits, plus
// the LID loss and accuracy used to supervise it.

#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "laqd/diffcore/graph.hpp"
#include "laqd/diffcore/ops.hpp"
#include "laqd/diffcore/random.hpp"
#include "laqd/util/errors.hpp"

namespace laqd::gating {

using diff::Graph;
using diff::Param;
using diff::SeqLayout;
using diff::Var;

class LengthError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using laqd::LabelError;

enum class GateVariant { conv, attnpool };

GateVariant parse_gate_variant(const std::string& s);
std::string to_string(GateVariant v);

struct GateConfig {
  GateVariant variant = GateVariant::conv;
  std::size_t channels = 64;  // conv channels
  std::size_t kernel = 5;
  std::size_t stride = 2;
  std::size_t hidden = 64;  // attnpool MLP width
};

class Gate {
 public:
  virtual ~Gate() = default;
  /// h: (batch*length) x d_speech encoder states -> batch x K logits.
  virtual Var forward(Graph& g, Var h, const SeqLayout& layout) = 0;
  virtual std::vector<Param*> params() = 0;
  std::size_t num_languages() const { return k_; }

 protected:
  explicit Gate(std::size_t k) : k_(k) {}
  std::size_t k_;
};

/// Two strided valid convolutions with GELU, masked mean-pool, linear head.
class GateConv final : public Gate {
 public:
  GateConv(std::size_t d_speech, std::size_t k, const GateConfig& cfg, diff::Rng& rng);
  Var forward(Graph& g, Var h, const SeqLayout& layout) override;
  std::vector<Param*> params() override { return {&w1_, &b1_, &w2_, &b2_, &wo_, &bo_}; }
  /// Smallest valid frame count that leaves one output after both layers.
  std::size_t min_frames() const;

 private:
  std::size_t kernel_, stride_;
  Param w1_, b1_, w2_, b2_, wo_, bo_;
};

/// Single learned query attention pooling followed by a 2-layer MLP.
class GateAttnPool final : public Gate {
 public:
  GateAttnPool(std::size_t d_speech, std::size_t k, const GateConfig& cfg, diff::Rng& rng);
  Var forward(Graph& g, Var h, const SeqLayout& layout) override;
  std::vector<Param*> params() override { return {&query_, &w1_, &b1_, &w2_, &b2_}; }
  /// Pooling weights of the last forward, (batch*length) x 1.
  Var last_weights() const { return weights_; }

 private:
  Param query_, w1_, b1_, w2_, b2_;
  Var weights_;
};

std::unique_ptr<Gate> make_gate(const GateConfig& cfg, std::size_t d_speech, std::size_t k, diff::Rng& rng);

/// Mean cross-entropy over samples with label >= 0. Returns exactly 0
/// with zero gradient when no sample is labelled.
Var lid_loss(Var logits, const std::vector<int>& labels);

/// Argmax matches over labelled samples. Ties resolve to the lowest index.
struct LidTally {
  std::size_t correct = 0;
  std::size_t total = 0;

  void add(const diff::Tensor& logits, const std::vector<int>& labels);
  /// Absent when nothing was labelled.
  std::optional<double> accuracy() const;
};

std::optional<double> lid_accuracy(const diff::Tensor& logits, const std::vector<int>& labels);

/// Index of the largest entry of row r, lowest index on ties.
std::size_t argmax_row(const diff::Tensor& t, std::size_t r);

}  // namespace laqd::gating

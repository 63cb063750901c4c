// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "laqd/diffcore/graph.hpp"
#include "laqd/diffcore/ops.hpp"

namespace laqd::stubs {

using diff::Graph;
using diff::Param;
using diff::SeqLayout;
using diff::Tensor;
using diff::Var;

struct StubConfig {
  std::size_t vocab = 64;
  std::size_t d_speech = 32;
  std::size_t d_llm = 64;
  std::size_t max_frames = 512;
  std::size_t llm_layers = 2;
  std::size_t llm_heads = 4;
  std::size_t llm_ffn = 128;
  std::uint64_t seed = 7;
};

class VocabularyError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Ground-truth per-token vectors in speech space (vocab x d_speech, unit
/// rows). The synthetic corpus renders these through per-language maps and
/// the LLM embedding table is an isometric lift of them.
Tensor token_signatures(std::size_t vocab, std::size_t d_speech, std::uint64_t seed);

/// Affine per-frame map H_t = W x_t + p(T_valid - 1 - t), where p is a fixed
/// sinusoidal table indexed by distance from the last valid frame. Padded
/// rows come out as zeros.
class FrozenEncoder {
 public:
  explicit FrozenEncoder(const StubConfig& cfg);

  /// frames: (batch*length) x d_speech.
  Var encode(Graph& g, Var frames, const SeqLayout& layout);

  std::vector<Param*> params() { return {&weight_, &position_bias_}; }

 private:
  Param weight_;
  Param position_bias_;
};

/// Lookup table with one extra pad row (index == vocab) that is all zeros.
class FrozenEmbedding {
 public:
  explicit FrozenEmbedding(const StubConfig& cfg);

  /// Unbatched lookup; every id must be < vocab.
  Var embed(Graph& g, const std::vector<std::uint32_t>& ids);
  /// Batched lookup over batch*length ids, returning (batch*length) x d_llm.
  /// Positions past each valid prefix get the pad row whatever their id.
  Var embed(Graph& g, const std::vector<std::uint32_t>& ids, const SeqLayout& layout);

  std::uint32_t pad_id() const { return static_cast<std::uint32_t>(vocab_); }
  const Tensor& table() const { return table_.value; }
  std::vector<Param*> params() { return {&table_}; }

 private:
  std::size_t vocab_;
  Param table_;
};

/// Small pre-norm causal transformer standing in for the LLM's last layer
/// states. A final layer norm with gain 1/sqrt(d_llm) puts every output row
/// on the unit sphere, the same scale as the embedding rows. All weights frozen.
class FrozenLLM {
 public:
  explicit FrozenLLM(const StubConfig& cfg);

  /// prefix: (batch*length) x d_llm; positions >= valid[b] are padding.
  Var last_hidden(Graph& g, Var prefix, const SeqLayout& layout);

  std::vector<Param*> params();

 private:
  struct Block {
    Param ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::size_t heads_;
  std::vector<Block> blocks_;
  Param final_g_, final_b_;
};

struct FrozenStubs {
  explicit FrozenStubs(const StubConfig& cfg) : config(cfg), encoder(cfg), embedding(cfg), llm(cfg) {}

  StubConfig config;
  FrozenEncoder encoder;
  FrozenEmbedding embedding;
  FrozenLLM llm;

  std::vector<Param*> params();
  /// Fingerprint over every frozen tensor.
  std::uint64_t hash();
};

}  // namespace laqd::stubs

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-attention projector: L query tokens attend over encoder states and
// come out as L vectors in the LLM embedding space.

#pragma once

#include <vector>

#include "laqd/diffcore/graph.hpp"
#include "laqd/diffcore/ops.hpp"
#include "laqd/diffcore/random.hpp"

namespace laqd::projector {

using diff::Graph;
using diff::Param;
using diff::SeqLayout;
using diff::Var;

struct ProjectorConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t length = 16;  // L, number of query tokens
  bool self_attn = false;   // query self-attention sublayer before cross-attention
  std::size_t ffn_mult = 2;
  double init_std = 0.02;

  void validate() const;
};

/// f(H): independent affine maps to keys and values, shared by all layers.
class KvProjection {
 public:
  KvProjection(std::size_t d_speech, std::size_t d_model, double init_std, diff::Rng& rng);
  struct Result {
    Var keys;
    Var values;
  };
  Result forward(Graph& g, Var h);
  std::vector<Param*> params() { return {&wk_, &bk_, &wv_, &bv_}; }

 private:
  Param wk_, bk_, wv_, bv_;
};

class QFormer {
 public:
  QFormer(const ProjectorConfig& cfg, std::size_t d_speech, std::size_t d_llm, diff::Rng& rng);

  /// queries: (B*L) x d_llm, h: (B*T) x d_speech -> Z: (B*L) x d_llm.
  Var forward(Graph& g, Var queries, Var h, const SeqLayout& frames);

  const ProjectorConfig& config() const { return cfg_; }
  KvProjection& kv() { return kv_; }
  /// Block, input and output parameters, excluding the kv projection.
  std::vector<Param*> block_params();
  std::vector<Param*> params();

 private:
  struct Block {
    Param sa_wq, sa_wk, sa_wv, sa_wo, sa_ln_g, sa_ln_b;  // only with self_attn
    Param wq, wo, ln1_g, ln1_b;
    Param w1, b1, w2, b2, ln2_g, ln2_b;
  };

  ProjectorConfig cfg_;
  KvProjection kv_;
  Param in_w_, in_b_;
  std::vector<Block> blocks_;
  Param out_w_, out_b_;
};

}  // namespace laqd::projector

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/projector/qformer.hpp"

#include <string>

#include "laqd/util/errors.hpp"

namespace laqd::projector {

namespace {

using diff::Tensor;

Param weight(std::string name, std::size_t in, std::size_t out, double sd, diff::Rng& rng) {
  return Param(std::move(name), diff::float_normal({in, out}, sd, rng));
}

Param filled(std::string name, std::size_t n, double v) { return Param(std::move(name), Tensor({n}, v)); }

}  // namespace

void ProjectorConfig::validate() const {
  if (n_layers < 1) throw ConfigError("projector.n_layers must be >= 1");
  if (length < 1) throw ConfigError("projector.L must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0) throw ConfigError("projector.d_model must be divisible by n_heads");
  if (ffn_mult < 1) throw ConfigError("projector.ffn_mult must be >= 1");
  if (!(init_std > 0.0)) throw ConfigError("projector.init_std must be positive");
}

KvProjection::KvProjection(std::size_t d_speech, std::size_t d_model, double sd, diff::Rng& rng)
    : wk_(weight("kv_proj.key.weight", d_speech, d_model, sd, rng)),
      bk_(filled("kv_proj.key.bias", d_model, 0.0)),
      wv_(weight("kv_proj.value.weight", d_speech, d_model, sd, rng)),
      bv_(filled("kv_proj.value.bias", d_model, 0.0)) {}

KvProjection::Result KvProjection::forward(Graph& g, Var h) {
  return {diff::add_bias(diff::matmul(h, g.param(wk_)), g.param(bk_)),
          diff::add_bias(diff::matmul(h, g.param(wv_)), g.param(bv_))};
}

QFormer::QFormer(const ProjectorConfig& cfg, std::size_t d_speech, std::size_t d_llm, diff::Rng& rng)
    : cfg_(cfg), kv_(d_speech, cfg.d_model, cfg.init_std, rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model, f = cfg.ffn_mult * cfg.d_model;
  const double sd = cfg.init_std;
  in_w_ = weight("projector.input.weight", d_llm, d, sd, rng);
  in_b_ = filled("projector.input.bias", d, 0.0);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "projector.block" + std::to_string(l) + ".";
    Block b;
    if (cfg.self_attn) {
      b.sa_wq = weight(p + "self_attn.wq", d, d, sd, rng);
      b.sa_wk = weight(p + "self_attn.wk", d, d, sd, rng);
      b.sa_wv = weight(p + "self_attn.wv", d, d, sd, rng);
      b.sa_wo = weight(p + "self_attn.wo", d, d, sd, rng);
      b.sa_ln_g = filled(p + "self_attn.ln.gamma", d, 1.0);
      b.sa_ln_b = filled(p + "self_attn.ln.beta", d, 0.0);
    }
    b.wq = weight(p + "cross_attn.wq", d, d, sd, rng);
    b.wo = weight(p + "cross_attn.wo", d, d, sd, rng);
    b.ln1_g = filled(p + "ln1.gamma", d, 1.0);
    b.ln1_b = filled(p + "ln1.beta", d, 0.0);
    b.w1 = weight(p + "ffn.w1", d, f, sd, rng);
    b.b1 = filled(p + "ffn.b1", f, 0.0);
    b.w2 = weight(p + "ffn.w2", f, d, sd, rng);
    b.b2 = filled(p + "ffn.b2", d, 0.0);
    b.ln2_g = filled(p + "ln2.gamma", d, 1.0);
    b.ln2_b = filled(p + "ln2.beta", d, 0.0);
    blocks_.push_back(std::move(b));
  }
  out_w_ = weight("projector.output.weight", d, d_llm, sd, rng);
  out_b_ = filled("projector.output.bias", d_llm, 0.0);
}

Var QFormer::forward(Graph& g, Var queries, Var h, const SeqLayout& frames) {
  frames.check();
  const std::size_t L = cfg_.length, B = frames.batch;
  if (queries.rows() != B * L) {
    throw diff::ShapeError("qformer: queries " + diff::shape_str(queries.shape()) + " for batch " +
                           std::to_string(B) + " and L " + std::to_string(L));
  }
  const auto kv = kv_.forward(g, h);
  const diff::AttentionSpec cross{B, L, frames.length, cfg_.n_heads, frames.valid, false};
  const diff::AttentionSpec self{B, L, L, cfg_.n_heads, std::vector<std::size_t>(B, L), false};
  Var x = diff::add_bias(diff::matmul(queries, g.param(in_w_)), g.param(in_b_));
  for (Block& b : blocks_) {
    if (cfg_.self_attn) {
      Var a = diff::attention(diff::matmul(x, g.param(b.sa_wq)), diff::matmul(x, g.param(b.sa_wk)),
                              diff::matmul(x, g.param(b.sa_wv)), self);
      x = diff::layer_norm_rows(diff::add(x, diff::matmul(a, g.param(b.sa_wo))), g.param(b.sa_ln_g),
                                g.param(b.sa_ln_b));
    }
    Var a = diff::attention(diff::matmul(x, g.param(b.wq)), kv.keys, kv.values, cross);
    x = diff::layer_norm_rows(diff::add(x, diff::matmul(a, g.param(b.wo))), g.param(b.ln1_g), g.param(b.ln1_b));
    Var f = diff::gelu(diff::add_bias(diff::matmul(x, g.param(b.w1)), g.param(b.b1)));
    f = diff::add_bias(diff::matmul(f, g.param(b.w2)), g.param(b.b2));
    x = diff::layer_norm_rows(diff::add(x, f), g.param(b.ln2_g), g.param(b.ln2_b));
  }
  return diff::add_bias(diff::matmul(x, g.param(out_w_)), g.param(out_b_));
}

std::vector<Param*> QFormer::block_params() {
  std::vector<Param*> out{&in_w_, &in_b_};
  for (Block& b : blocks_) {
    if (cfg_.self_attn) {
      for (Param* p : {&b.sa_wq, &b.sa_wk, &b.sa_wv, &b.sa_wo, &b.sa_ln_g, &b.sa_ln_b}) out.push_back(p);
    }
    for (Param* p : {&b.wq, &b.wo, &b.ln1_g, &b.ln1_b, &b.w1, &b.b1, &b.w2, &b.b2, &b.ln2_g, &b.ln2_b})
      out.push_back(p);
  }
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

std::vector<Param*> QFormer::params() {
  std::vector<Param*> out = kv_.params();
  for (Param* p : block_params()) out.push_back(p);
  return out;
}

}  // namespace laqd::projector

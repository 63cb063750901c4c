// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/stubs/frozen_stubs.hpp"

#include <cmath>
#include <stdexcept>

#include "laqd/diffcore/random.hpp"

namespace laqd::stubs {

namespace {

using diff::derive_seed;
using diff::Rng;

// Per-component stream tags under the frozen seed.
enum : std::uint64_t { kSignatures = 1, kEncoder = 2, kLift = 3, kLlm = 4 };

Param frozen(std::string name, Tensor t) {
  diff::round_to_float(t);
  return Param(std::move(name), std::move(t), false);
}

}  // namespace

Tensor token_signatures(std::size_t vocab, std::size_t d_speech, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kSignatures));
  Tensor s = diff::normal_tensor({vocab, d_speech}, 1.0, rng);
  for (std::size_t i = 0; i < vocab; ++i) {
    double n = 0.0;
    for (std::size_t j = 0; j < d_speech; ++j) n += s.at(i, j) * s.at(i, j);
    n = std::sqrt(n);
    for (std::size_t j = 0; j < d_speech; ++j) s.at(i, j) /= n;
  }
  return s;
}

FrozenEncoder::FrozenEncoder(const StubConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, kEncoder));
  weight_ = frozen("stub.encoder.weight", diff::orthonormal(cfg.d_speech, cfg.d_speech, rng));
  // Sinusoidal code of distance-to-end, scaled to unit row norm.
  Tensor pos({cfg.max_frames, cfg.d_speech});
  const double d = static_cast<double>(cfg.d_speech);
  const double norm = std::sqrt(2.0 / d);
  for (std::size_t p = 0; p < cfg.max_frames; ++p) {
    for (std::size_t i = 0; i < cfg.d_speech; ++i) {
      const double freq = std::pow(1000.0, -static_cast<double>(i / 2 * 2) / d);
      pos.at(p, i) = norm * ((i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq));
    }
  }
  position_bias_ = frozen("stub.encoder.position_bias", std::move(pos));
}

Var FrozenEncoder::encode(Graph& g, Var frames, const SeqLayout& layout) {
  layout.check();
  const std::size_t d = weight_.value.cols();
  if (frames.cols() != d || frames.rows() != layout.rows()) {
    throw diff::ShapeError("encode: frames " + diff::shape_str(frames.shape()) + " do not match layout");
  }
  Tensor bias({layout.rows(), d});
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const std::size_t n = layout.valid[b];
    if (n > position_bias_.value.rows()) throw diff::ShapeError("encode: utterance longer than max_frames");
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < d; ++j) bias.at(b * layout.length + t, j) = position_bias_.value.at(n - 1 - t, j);
    }
  }
  // Zero the padded rows of the input so that pads map to zero output.
  Tensor mask({layout.rows(), d});
  for (std::size_t b = 0; b < layout.batch; ++b)
    for (std::size_t t = 0; t < layout.valid[b]; ++t)
      for (std::size_t j = 0; j < d; ++j) mask.at(b * layout.length + t, j) = 1.0;
  Var x = diff::mul(frames, g.constant(std::move(mask)));
  return diff::add(diff::matmul(x, g.param(weight_)), g.constant(std::move(bias)));
}

FrozenEmbedding::FrozenEmbedding(const StubConfig& cfg) : vocab_(cfg.vocab) {
  if (cfg.d_llm < cfg.d_speech) throw std::invalid_argument("FrozenEmbedding: d_llm must be >= d_speech");
  const Tensor sig = token_signatures(cfg.vocab, cfg.d_speech, cfg.seed);
  Rng rng(derive_seed(cfg.seed, kLift));
  const Tensor lift = diff::orthonormal(cfg.d_llm, cfg.d_speech, rng);
  Tensor table({cfg.vocab + 1, cfg.d_llm});
  for (std::size_t v = 0; v < cfg.vocab; ++v)
    for (std::size_t i = 0; i < cfg.d_llm; ++i)
      for (std::size_t j = 0; j < cfg.d_speech; ++j) table.at(v, i) += lift.at(i, j) * sig.at(v, j);
  table_ = frozen("stub.embedding.table", std::move(table));
}

Var FrozenEmbedding::embed(Graph& g, const std::vector<std::uint32_t>& ids) {
  return embed(g, ids, SeqLayout{1, ids.size(), {ids.size()}});
}

Var FrozenEmbedding::embed(Graph& g, const std::vector<std::uint32_t>& ids, const SeqLayout& layout) {
  layout.check();
  if (ids.size() != layout.rows()) throw diff::ShapeError("embed: id count does not match layout");
  std::vector<std::size_t> rows(ids.size(), vocab_);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t t = 0; t < layout.valid[b]; ++t) {
      const std::uint32_t id = ids[b * layout.length + t];
      if (id >= vocab_) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab_));
      }
      rows[b * layout.length + t] = id;
    }
  }
  return diff::gather_rows(g.param(table_), std::move(rows));
}

FrozenLLM::FrozenLLM(const StubConfig& cfg) : heads_(cfg.llm_heads) {
  Rng rng(derive_seed(cfg.seed, kLlm));
  const std::size_t d = cfg.d_llm, f = cfg.llm_ffn;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  for (std::size_t l = 0; l < cfg.llm_layers; ++l) {
    const std::string p = "stub.llm." + std::to_string(l) + ".";
    Block b;
    b.ln1_g = frozen(p + "ln1.gamma", Tensor({d}, 1.0));
    b.ln1_b = frozen(p + "ln1.beta", Tensor({d}, 0.0));
    b.wq = frozen(p + "attn.wq", diff::normal_tensor({d, d}, sd, rng));
    b.wk = frozen(p + "attn.wk", diff::normal_tensor({d, d}, sd, rng));
    b.wv = frozen(p + "attn.wv", diff::normal_tensor({d, d}, sd, rng));
    b.wo = frozen(p + "attn.wo", diff::normal_tensor({d, d}, sd, rng));
    b.ln2_g = frozen(p + "ln2.gamma", Tensor({d}, 1.0));
    b.ln2_b = frozen(p + "ln2.beta", Tensor({d}, 0.0));
    b.w1 = frozen(p + "ffn.w1", diff::normal_tensor({d, f}, sd, rng));
    b.b1 = frozen(p + "ffn.b1", Tensor({f}, 0.0));
    b.w2 = frozen(p + "ffn.w2", diff::normal_tensor({f, d}, sf, rng));
    b.b2 = frozen(p + "ffn.b2", Tensor({d}, 0.0));
    blocks_.push_back(std::move(b));
  }
  final_g_ = frozen("stub.llm.final_ln.gamma", Tensor({d}, 1.0 / std::sqrt(static_cast<double>(d))));
  final_b_ = frozen("stub.llm.final_ln.beta", Tensor({d}, 0.0));
}

Var FrozenLLM::last_hidden(Graph& g, Var prefix, const SeqLayout& layout) {
  layout.check();
  diff::AttentionSpec spec{layout.batch, layout.length, layout.length, heads_, layout.valid, true};
  Var x = prefix;
  for (Block& b : blocks_) {
    Var h = diff::layer_norm_rows(x, g.param(b.ln1_g), g.param(b.ln1_b));
    Var a = diff::attention(diff::matmul(h, g.param(b.wq)), diff::matmul(h, g.param(b.wk)),
                            diff::matmul(h, g.param(b.wv)), spec);
    x = diff::add(x, diff::matmul(a, g.param(b.wo)));
    h = diff::layer_norm_rows(x, g.param(b.ln2_g), g.param(b.ln2_b));
    Var f = diff::gelu(diff::add_bias(diff::matmul(h, g.param(b.w1)), g.param(b.b1)));
    x = diff::add(x, diff::add_bias(diff::matmul(f, g.param(b.w2)), g.param(b.b2)));
  }
  return diff::layer_norm_rows(x, g.param(final_g_), g.param(final_b_));
}

std::vector<Param*> FrozenLLM::params() {
  std::vector<Param*> out;
  for (Block& b : blocks_) {
    for (Param* p : {&b.ln1_g, &b.ln1_b, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2})
      out.push_back(p);
  }
  out.push_back(&final_g_);
  out.push_back(&final_b_);
  return out;
}

std::vector<Param*> FrozenStubs::params() {
  std::vector<Param*> out = encoder.params();
  for (Param* p : embedding.params()) out.push_back(p);
  for (Param* p : llm.params()) out.push_back(p);
  return out;
}

std::uint64_t FrozenStubs::hash() {
  std::uint64_t h = 14695981039346656037ull;
  for (const Param* p : params()) h = diff::fingerprint(p->value, h);
  return h;
}

}  // namespace laqd::stubs

// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/train/model.hpp"

#include <numeric>

namespace laqd::train {

namespace {

// Init stream tags under seed.model.
enum : std::uint64_t { kGateInit = 1, kBankInit = 2, kProjectorInit = 3 };

diff::Rng stream(std::uint64_t seed, std::uint64_t tag) { return diff::Rng(diff::derive_seed(seed, tag)); }

gating::GateConfig checked_gate(const TrainConfig& cfg) {
  cfg.validate();
  return cfg.gate;
}

// Per-sample input distillation from values, for the language breakdown.
std::vector<double> per_sample_l_in(const diff::Tensor& z, std::size_t L, const diff::Tensor& y,
                                    const diff::SeqLayout& tok, losses::L2Mode mode) {
  std::vector<double> out(tok.batch, 0.0);
  for (std::size_t b = 0; b < tok.batch; ++b) {
    const std::size_t n = tok.valid[b];
    for (std::size_t t = 0; t < n; ++t) {
      double d = 0.0;
      for (std::size_t j = 0; j < z.cols(); ++j) {
        const double e = z.at(b * L + L - n + t, j) - y.at(b * tok.length + t, j);
        d += e * e;
      }
      out[b] += mode == losses::L2Mode::root ? std::sqrt(d + 1e-12) : d;
    }
    out[b] /= static_cast<double>(n);
  }
  return out;
}

}  // namespace

stubs::StubConfig stub_config(const TrainConfig& cfg) {
  stubs::StubConfig s;
  s.vocab = cfg.data.vocab;
  s.d_speech = cfg.data.d_speech;
  s.d_llm = cfg.d_llm;
  s.max_frames = cfg.llm_max_frames;
  s.llm_layers = cfg.llm_layers;
  s.llm_heads = cfg.llm_heads;
  s.llm_ffn = cfg.llm_ffn;
  s.seed = cfg.seed.frozen;
  return s;
}

Model::Model(const TrainConfig& cfg)
    : cfg_(cfg),
      stubs_(stub_config(cfg)),
      gate_([&] {
        auto rng = stream(cfg.seed.model, kGateInit);
        return gating::make_gate(checked_gate(cfg), cfg.data.d_speech, cfg.data.languages, rng);
      }()),
      qformer_([&] {
        auto rng = stream(cfg.seed.model, kProjectorInit);
        return projector::QFormer(cfg.projector, cfg.data.d_speech, cfg.d_llm, rng);
      }()) {
  auto rng = stream(cfg.seed.model, kBankInit);
  const std::size_t L = cfg.projector.length;
  if (cfg.static_queries) {
    static_.emplace(L, cfg.d_llm, rng);
  } else {
    const std::size_t entries = cfg.routing_mode == routing::RoutingMode::shared ? 1 : cfg.data.languages;
    bank_.emplace(entries, L, cfg.d_llm, rng);
  }
}

ForwardResult Model::forward(Graph& g, const synth::Batch& batch, const ForwardOptions& opt) {
  const std::size_t B = batch.size(), L = cfg_.projector.length;
  ForwardResult r;
  Var h = stubs_.encoder.encode(g, g.constant(batch.frames), batch.frame_layout);
  r.logits = gate_->forward(g, h, batch.frame_layout);
  Var queries;
  if (static_) {
    queries = static_->tiled(g, B);
    r.decisions.assign(B, routing::RoutingDecision{});
  } else {
    diff::Rng unused(0);
    if (opt.teacher_forcing && !opt.routing_rng) throw std::invalid_argument("teacher forcing needs a routing rng");
    auto routed = routing::route_batch(g, *bank_, r.logits, batch.labels, cfg_.routing_mode, cfg_.st_variant,
                                       opt.step, {static_cast<double>(cfg_.optim.total_steps), cfg_.anneal_fraction},
                                       opt.routing_rng ? *opt.routing_rng : unused, opt.teacher_forcing);
    queries = routed.queries;
    r.decisions = std::move(routed.decisions);
  }
  r.queries = queries;
  r.z = qformer_.forward(g, queries, h, batch.frame_layout);
  r.y = stubs_.embedding.embed(g, batch.tokens, batch.token_layout);
  Var l_in = losses::input_distill(r.z, L, r.y, batch.token_layout, cfg_.l2);

  // Teacher branch in its own graph: it is detached, so no tape is needed.
  diff::Tensor teacher;
  {
    Graph tg;
    Var ty = stubs_.embedding.embed(tg, batch.tokens, batch.token_layout);
    teacher = stubs_.llm.last_hidden(tg, ty, batch.token_layout).value();
  }
  Var h_sp = stubs_.llm.last_hidden(g, r.z, diff::SeqLayout{B, L, std::vector<std::size_t>(B, L)});
  Var l_out = losses::output_distill(h_sp, L, g.constant(std::move(teacher)), batch.token_layout, cfg_.l2);
  Var l_lid = gating::lid_loss(r.logits, batch.labels);
  r.loss = losses::total_loss(l_in, l_out, l_lid, cfg_.loss);
  return r;
}

std::vector<Param*> Model::trainable() {
  std::vector<Param*> out;
  for (const auto& grp : groups())
    for (Param* p : grp.params) out.push_back(p);
  return out;
}

std::vector<ParamGroup> Model::groups() {
  std::vector<ParamGroup> out;
  out.push_back({"gate " + gating::to_string(cfg_.gate.variant), gate_->params()});
  out.push_back({"query bank", {bank_ ? &bank_->param() : &static_->param()}});
  out.push_back({"projector", qformer_.block_params()});
  out.push_back({"kv-proj", qformer_.kv().params()});
  return out;
}

Param* Model::find(const std::string& name) {
  for (Param* p : trainable())
    if (p->name == name) return p;
  for (Param* p : frozen())
    if (p->name == name) return p;
  return nullptr;
}

EvalSummary evaluate(Model& model, const std::vector<synth::Utterance>& split, std::size_t batch_size) {
  EvalSummary s;
  const std::size_t L = model.config().projector.length;
  const std::size_t entries = model.bank() ? model.bank()->entries() : 1;
  s.route_histogram.assign(entries, 0);
  double sum_in = 0.0, sum_out = 0.0, sum_lid = 0.0;
  std::size_t n_lid = 0;
  gating::LidTally tally;
  std::map<int, double> lang_sum;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, split.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = synth::make_batch(split, idx, model.pad_id());
    Graph g;
    const auto r = model.forward(g, batch, {});
    const double B = static_cast<double>(batch.size());
    sum_in += r.loss.in() * B;
    sum_out += r.loss.out() * B;
    std::size_t labelled = 0;
    for (int l : batch.labels) labelled += l >= 0;
    sum_lid += r.loss.lid() * static_cast<double>(labelled);
    n_lid += labelled;
    tally.add(r.logits.value(), batch.labels);
    const auto per = per_sample_l_in(r.z.value(), L, r.y.value(), batch.token_layout, model.config().l2);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      lang_sum[batch.languages[b]] += per[b];
      ++s.count_by_language[batch.languages[b]];
      ++s.route_histogram[r.decisions[b].k_used];
    }
  }
  s.samples = split.size();
  const double n = static_cast<double>(s.samples);
  s.l_in = sum_in / n;
  s.l_out = sum_out / n;
  s.l_lid = n_lid ? sum_lid / static_cast<double>(n_lid) : 0.0;
  const auto& w = model.config().loss;
  s.total = w.lambda_in * s.l_in + w.lambda_out * s.l_out + w.lambda_lid * s.l_lid;
  s.lid_accuracy = tally.accuracy();
  for (const auto& [k, v] : lang_sum) s.l_in_by_language[k] = v / static_cast<double>(s.count_by_language[k]);
  return s;
}

}  // namespace laqd::train

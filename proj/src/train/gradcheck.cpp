// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/train/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <algorithm>
#include <numeric>

#include "laqd/diffcore/finite_diff.hpp"
#include "laqd/train/model.hpp"

namespace laqd::train {

namespace {

constexpr std::size_t kMaxParams = 5000;

synth::Batch tiny_batch(const TrainConfig& cfg, const synth::Corpus& corpus) {
  // Several samples of distinct lengths so that masking is exercised.
  std::vector<std::size_t> idx;
  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < corpus.train.size() && idx.size() < cfg.batch_size; ++i) {
    const std::size_t n = corpus.train[i].tokens.size();
    if (std::find(seen.begin(), seen.end(), n) != seen.end() && i + cfg.batch_size < corpus.train.size()) continue;
    seen.push_back(n);
    idx.push_back(i);
  }
  return synth::make_batch(corpus.train, idx, static_cast<std::uint32_t>(cfg.data.vocab));
}

double group_error(const std::vector<diff::ParamGradCheck>& checks) {
  double scale = 1e-12, err = 0.0;
  for (const auto& c : checks) {
    for (std::size_t i = 0; i < c.analytic.size(); ++i) {
      scale = std::max({scale, std::abs(c.analytic[i]), std::abs(c.numeric[i])});
      err = std::max(err, std::abs(c.analytic[i] - c.numeric[i]));
    }
  }
  return err / scale;
}

std::string mode_label(const TrainConfig& c) {
  return routing::to_string(c.routing_mode) + "/" + gating::to_string(c.gate.variant);
}

// Straight-through identity: bank grad row j == sum_b (delta_{j,k_b} + pi_bj) G_b
// where G is the gradient arriving at the routed queries.
GradcheckRow hard_mode_row(TrainConfig cfg, const synth::Batch& batch, double tol) {
  cfg.routing_mode = routing::RoutingMode::hard;
  Model model(cfg);
  for (Param* p : model.trainable()) p->zero_grad();
  Graph g;
  const auto r = model.forward(g, batch, {});
  g.backward(r.loss.total);
  const diff::Tensor& up = r.queries.grad();
  const auto& bank = model.bank()->param();
  const std::size_t K = model.bank()->entries(), row = model.bank()->length() * model.bank()->dim();
  diff::Tensor want({K, row});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& d = r.decisions[b];
    for (std::size_t j = 0; j < K; ++j) {
      const double w = d.pi[j] + (j == d.k_used && cfg.st_variant == routing::StVariant::paper ? 1.0 : 0.0);
      for (std::size_t i = 0; i < row; ++i) want.at(j, i) += w * up[b * row + i];
    }
  }
  const diff::Tensor got = bank.grad.reshaped({K, row});
  GradcheckRow out{"query bank", mode_label(cfg), "analytic", bank.value.size(), diff::relative_error(got, want), false};
  // The identity is exact algebra, so it is held to a far tighter bound.
  out.pass = out.rel_error < std::min(tol, 1e-10);
  return out;
}

}  // namespace

bool GradcheckReport::pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.pass; });
}

std::vector<std::string> GradcheckReport::offenders() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (!r.pass) out.push_back(r.group + " [" + r.mode + "]");
  return out;
}

std::string GradcheckReport::table() const {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-16s %-12s %8s %12s  %s\n", "group", "mode", "method", "params", "rel_error",
                "result");
  s += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %-16s %-12s %8zu %12.3e  %s\n", r.group.c_str(), r.mode.c_str(),
                  r.method.c_str(), r.params, r.rel_error, r.pass ? "PASS" : "FAIL");
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "tolerance %.1e, %.1f s\n", tolerance, seconds);
  return s + buf;
}

TrainConfig gradcheck_config() {
  TrainConfig c;
  c.data.languages = 3;
  c.data.weights = {};
  c.data.vocab = 8;
  c.data.d_speech = 4;
  c.data.frames_per_token = 5;
  c.data.min_tokens = 3;
  c.data.max_tokens = 4;
  c.data.n_train = 24;
  c.data.n_val = 4;
  c.data.unknown_fraction = 0.25;
  c.data.seed = 3;
  c.gate.channels = 4;
  c.gate.hidden = 5;
  c.projector.n_layers = 2;
  c.projector.n_heads = 2;
  c.projector.d_model = 8;
  c.projector.length = 4;
  c.projector.init_std = 0.3;
  c.d_llm = 8;
  c.llm_heads = 2;
  c.llm_ffn = 8;
  c.llm_max_frames = 32;
  c.batch_size = 3;
  return c;
}

GradcheckReport run_gradcheck(const TrainConfig& base, double tol) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport rep;
  rep.tolerance = tol;
  TrainConfig cfg = base;
  cfg.data.frozen_seed = cfg.seed.frozen;
  cfg.static_queries = false;
  cfg.validate();
  const synth::Corpus corpus = synth::make_corpus(cfg.data);
  const synth::Batch batch = tiny_batch(cfg, corpus);

  for (auto variant : {gating::GateVariant::conv, gating::GateVariant::attnpool}) {
    for (auto mode : {routing::RoutingMode::soft, routing::RoutingMode::shared}) {
      TrainConfig c = cfg;
      c.gate.variant = variant;
      c.routing_mode = mode;
      Model model(c);
      std::size_t total = 0;
      for (Param* p : model.trainable()) total += p->value.size();
      if (total > kMaxParams) {
        throw ConfigError("gradcheck needs tiny dimensions: " + std::to_string(total) + " trainable parameters");
      }
      auto build = [&](Graph& g) { return model.forward(g, batch, {}).loss.total; };
      for (auto& grp : model.groups()) {
        // The bank is routed identically in both gate runs; check it once.
        if (grp.name == "query bank" && variant == gating::GateVariant::attnpool) continue;
        if (grp.name == "projector" && variant == gating::GateVariant::attnpool) continue;
        if (grp.name == "kv-proj" && variant == gating::GateVariant::attnpool) continue;
        const auto checks = diff::check_param_grads(build, grp.params);
        GradcheckRow row{grp.name, mode_label(c), "finite-diff", 0, group_error(checks), false};
        for (Param* p : grp.params) row.params += p->value.size();
        row.pass = row.rel_error < tol;
        rep.rows.push_back(row);
      }
    }
  }
  rep.rows.push_back(hard_mode_row(cfg, batch, tol));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace laqd::train

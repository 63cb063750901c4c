// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace laqd::train {

namespace {

using nlohmann::ordered_json;

// Stream tags under the seed tuple.
enum : std::uint64_t { kSamplerTag = 11, kRoutingTag = 12 };

// Mutable loop state other than parameters and moments. Serialised into the
// checkpoint so that a resumed run continues bit for bit.
struct LoopState {
  std::uint64_t step = 0;
  double best_total = INFINITY;
  std::uint64_t best_step = 0;
  std::uint64_t bad_checks = 0;
  // Running sums of the current logging window.
  std::uint64_t win_steps = 0;
  double win_in = 0, win_out = 0, win_lid = 0, win_total = 0, win_norm = 0;
  std::uint64_t win_clipped = 0, win_lid_correct = 0, win_lid_total = 0, win_forced = 0;
  std::vector<std::uint64_t> win_routes;
};

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::string encode_state(const LoopState& s, const synth::EpochSampler& sampler, const diff::Rng& routing) {
  std::ostringstream os;
  os << "best_total " << hex(s.best_total) << "\nbest_step " << s.best_step << "\nbad_checks " << s.bad_checks
     << "\nwin_steps " << s.win_steps << "\nwin " << hex(s.win_in) << ' ' << hex(s.win_out) << ' ' << hex(s.win_lid)
     << ' ' << hex(s.win_total) << ' ' << hex(s.win_norm) << "\nwin_counts " << s.win_clipped << ' '
     << s.win_lid_correct << ' ' << s.win_lid_total << ' ' << s.win_forced << "\nwin_routes " << s.win_routes.size();
  for (auto r : s.win_routes) os << ' ' << r;
  os << "\nrouting_rng " << routing << "\nsampler " << sampler.save_state() << "\n";
  return os.str();
}

double read_hex(std::istream& is) {
  std::string t;
  is >> t;
  return std::strtod(t.c_str(), nullptr);
}

void expect(std::istream& is, const char* key) {
  std::string k;
  is >> k;
  if (k != key) throw io::FormatError(std::string("checkpoint state: expected '") + key + "', found '" + k + "'");
}

void decode_state(const std::string& text, LoopState& s, synth::EpochSampler& sampler, diff::Rng& routing) {
  std::istringstream is(text);
  expect(is, "best_total");
  s.best_total = read_hex(is);
  expect(is, "best_step");
  is >> s.best_step;
  expect(is, "bad_checks");
  is >> s.bad_checks;
  expect(is, "win_steps");
  is >> s.win_steps;
  expect(is, "win");
  s.win_in = read_hex(is);
  s.win_out = read_hex(is);
  s.win_lid = read_hex(is);
  s.win_total = read_hex(is);
  s.win_norm = read_hex(is);
  expect(is, "win_counts");
  is >> s.win_clipped >> s.win_lid_correct >> s.win_lid_total >> s.win_forced;
  expect(is, "win_routes");
  std::size_t n = 0;
  is >> n;
  s.win_routes.resize(n);
  for (auto& r : s.win_routes) is >> r;
  expect(is, "routing_rng");
  is >> routing;
  expect(is, "sampler");
  std::string rest;
  std::getline(is, rest);
  if (!is) throw io::FormatError("checkpoint state is truncated");
  sampler.load_state(rest);
}

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json summary_object(const EvalSummary& s) {
  ordered_json j;
  j["l_in"] = s.l_in;
  j["l_out"] = s.l_out;
  j["l_lid"] = s.l_lid;
  j["total"] = s.total;
  j["lid_accuracy"] = optional_number(s.lid_accuracy);
  ordered_json per = ordered_json::object();
  for (const auto& [k, v] : s.l_in_by_language) per[std::to_string(k)] = v;
  j["l_in_by_language"] = per;
  j["routes"] = s.route_histogram;
  j["samples"] = s.samples;
  return j;
}

void check_corpus(const TrainConfig& cfg, const synth::Corpus& corpus) {
  if (corpus.config.frozen_seed != cfg.seed.frozen) {
    throw ConfigError("corpus was rendered with frozen seed " + std::to_string(corpus.config.frozen_seed) +
                      " but seed.frozen = " + std::to_string(cfg.seed.frozen));
  }
  for (const auto* split : {&corpus.train, &corpus.val}) {
    for (const auto& u : *split) {
      if (u.tokens.size() > cfg.projector.length) {
        throw losses::CapacityError("corpus has a transcript of " + std::to_string(u.tokens.size()) +
                                    " tokens but projector.L = " + std::to_string(cfg.projector.length) +
                                    "; increase projector.L or lower data.max_tokens");
      }
    }
  }
  if (corpus.train.empty() || corpus.val.empty()) throw ConfigError("corpus has an empty split");
}

}  // namespace

Checkpoint make_checkpoint(Model& model, AdamW* adam, std::uint64_t step, const std::string& state) {
  Checkpoint ck;
  ck.step = step;
  ck.config = dump_config(model.config());
  for (Param* p : model.trainable()) ck.params.push_back({p->name, p->value});
  for (Param* p : model.frozen()) ck.params.push_back({p->name, p->value});
  if (adam) {
    for (std::size_t i = 0; i < adam->params().size(); ++i) {
      ck.moments.push_back({"adam.m." + adam->params()[i]->name, adam->first_moments()[i]});
      ck.moments.push_back({"adam.v." + adam->params()[i]->name, adam->second_moments()[i]});
    }
  }
  ck.state = state;
  return ck;
}

std::unique_ptr<Model> load_model(const Checkpoint& ck) {
  auto model = std::make_unique<Model>(parse_config(ck.config));
  for (const auto& rec : ck.params) {
    Param* p = model->find(rec.name);
    if (!p) throw io::FormatError("checkpoint tensor '" + rec.name + "' does not belong to this model");
    if (p->value.shape() != rec.value.shape()) {
      throw io::FormatError("checkpoint tensor '" + rec.name + "' has shape " + diff::shape_str(rec.value.shape()) +
                            ", model expects " + diff::shape_str(p->value.shape()));
    }
    p->value = rec.value;
  }
  return model;
}

std::string summary_json(const EvalSummary& s) { return summary_object(s).dump(); }

TrainResult train(const TrainConfig& cfg_in, const synth::Corpus& corpus, const TrainOptions& opt) {
  TrainConfig cfg = cfg_in;
  cfg.data = corpus.config;
  cfg.validate();
  check_corpus(cfg, corpus);

  Model model(cfg);
  AdamW adam(model.trainable(), cfg.optim);
  synth::EpochSampler sampler(corpus.train.size(), diff::derive_seed(cfg.seed.data, kSamplerTag));
  diff::Rng routing_rng(diff::derive_seed(cfg.seed.routing, kRoutingTag));
  LoopState st;
  const std::size_t entries = model.bank() ? model.bank()->entries() : 1;
  st.win_routes.assign(entries, 0);

  TrainResult res;
  res.frozen_hash_before = model.frozen_hash();

  std::ofstream metrics;
  if (opt.write_files) {
    std::filesystem::create_directories(cfg.out_dir);
    res.metrics_path = cfg.out_dir + "/metrics.jsonl";
    res.best_checkpoint = cfg.out_dir + "/best.ckpt";
    res.latest_checkpoint = cfg.out_dir + "/latest.ckpt";
  }

  if (!opt.resume.empty()) {
    const Checkpoint ck = load_checkpoint(opt.resume);
    if (ck.config != dump_config(cfg)) throw ConfigError("resume checkpoint was written with a different config");
    auto loaded = load_model(ck);
    for (Param* p : model.trainable()) p->value = loaded->find(p->name)->value;
    if (ck.moments.size() != 2 * adam.params().size()) throw io::FormatError("checkpoint lacks optimizer moments");
    for (std::size_t i = 0; i < adam.params().size(); ++i) {
      adam.first_moments()[i] = ck.moments[2 * i].value;
      adam.second_moments()[i] = ck.moments[2 * i + 1].value;
    }
    adam.set_steps(ck.step);
    st.step = ck.step;
    decode_state(ck.state, st, sampler, routing_rng);
    res.best_step = st.best_step;
    if (st.best_step && opt.write_files && std::filesystem::exists(res.best_checkpoint)) {
      auto best = load_model(load_checkpoint(res.best_checkpoint));
      res.best = evaluate(*best, corpus.val, cfg.validation.batch_size);
    }
  }

  if (opt.write_files) {
    // A fresh run truncates; a resumed run keeps records up to its step.
    std::vector<std::string> kept;
    if (!opt.resume.empty()) {
      std::ifstream old(res.metrics_path);
      for (std::string line; std::getline(old, line);) {
        if (!line.empty() && ordered_json::parse(line).at("step").get<std::uint64_t>() <= st.step) kept.push_back(line);
      }
    }
    metrics.open(res.metrics_path, std::ios::trunc);
    for (const auto& l : kept) metrics << l << '\n';
  }

  const auto t0 = std::chrono::steady_clock::now();
  const routing::TFSchedule sched{static_cast<double>(cfg.optim.total_steps), cfg.anneal_fraction};
  const std::size_t limit = opt.stop_after ? std::min(opt.stop_after, cfg.optim.total_steps) : cfg.optim.total_steps;

  while (st.step < limit) {
    const std::size_t t = ++st.step;
    const auto idx = sampler.next(cfg.batch_size);
    const auto batch = synth::make_batch(corpus.train, idx, model.pad_id());
    double lr = lr_at(static_cast<double>(t), cfg.optim);
    double norm = 0.0;
    bool clipped = false;
    {
      Graph g;
      ForwardOptions fo{static_cast<double>(t - 1), true, &routing_rng};
      const auto r = model.forward(g, batch, fo);
      if (!std::isfinite(r.loss.value())) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << t << ": l_in=" << r.loss.in() << " l_out=" << r.loss.out()
            << " l_lid=" << r.loss.lid() << " total=" << r.loss.value();
        throw TrainingError(msg.str());
      }
      g.backward(r.loss.total);
      norm = adam.grad_norm();
      if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm at step " + std::to_string(t));
      clipped = adam.clip();
      adam.step(lr);

      st.win_steps += 1;
      st.win_in += r.loss.in();
      st.win_out += r.loss.out();
      st.win_lid += r.loss.lid();
      st.win_total += r.loss.value();
      st.win_norm += norm;
      st.win_clipped += clipped;
      gating::LidTally tally;
      tally.add(r.logits.value(), batch.labels);
      st.win_lid_correct += tally.correct;
      st.win_lid_total += tally.total;
      for (const auto& d : r.decisions) {
        ++st.win_routes[d.k_used];
        st.win_forced += d.teacher_forced;
      }
    }

    const bool validate_now = t % cfg.validation.every_n_steps == 0 || t == cfg.optim.total_steps;
    const bool log_now = validate_now || t % cfg.log_every == 0;
    bool stop = false;
    ordered_json rec;
    if (log_now) {
      const double n = static_cast<double>(st.win_steps);
      rec["step"] = t;
      rec["lr"] = lr;
      rec["p_tf"] = routing::p_tf(static_cast<double>(t - 1), sched);
      rec["l_in"] = st.win_in / n;
      rec["l_out"] = st.win_out / n;
      rec["l_lid"] = st.win_lid / n;
      rec["total"] = st.win_total / n;
      rec["lid_accuracy"] = st.win_lid_total ? ordered_json(static_cast<double>(st.win_lid_correct) /
                                                            static_cast<double>(st.win_lid_total))
                                             : ordered_json(nullptr);
      rec["grad_norm"] = st.win_norm / n;
      rec["clipped_steps"] = st.win_clipped;
      rec["routes"] = st.win_routes;
      rec["teacher_forced"] = st.win_forced;
      const std::size_t keep = st.win_routes.size();
      const LoopState fresh;
      st.win_steps = fresh.win_steps;
      st.win_in = st.win_out = st.win_lid = st.win_total = st.win_norm = 0.0;
      st.win_clipped = st.win_lid_correct = st.win_lid_total = st.win_forced = 0;
      st.win_routes.assign(keep, 0);
    }
    if (validate_now) {
      adam.quantize();
      res.last = evaluate(model, corpus.val, cfg.validation.batch_size);
      rec["val"] = summary_object(res.last);
      if (res.last.total < st.best_total) {
        st.best_total = res.last.total;
        st.best_step = t;
        st.bad_checks = 0;
        res.best = res.last;
        if (opt.write_files) save_checkpoint(res.best_checkpoint, make_checkpoint(model, &adam, t, ""));
      } else if (++st.bad_checks >= cfg.validation.patience) {
        stop = true;
        res.early_stopped = true;
      }
      if (opt.write_files) {
        save_checkpoint(res.latest_checkpoint,
                        make_checkpoint(model, &adam, t, encode_state(st, sampler, routing_rng)));
      }
      if (opt.log) {
        std::ostringstream m;
        m << "step " << t << " val total " << res.last.total << " l_in " << res.last.l_in << " l_out "
          << res.last.l_out << " lid_acc "
          << (res.last.lid_accuracy ? std::to_string(*res.last.lid_accuracy) : std::string("absent"));
        opt.log(m.str());
      }
    }
    if (log_now) {
      if (cfg.wall_time) {
        rec["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
      if (metrics.is_open()) metrics << rec.dump() << '\n' << std::flush;
    }
    if (stop) break;
  }
  res.steps = st.step;
  res.best_step = st.best_step;
  res.frozen_hash_after = model.frozen_hash();
  return res;
}

TrainResult train_from_config(const TrainConfig& cfg, const TrainOptions& opt) {
  if (cfg.corpus_path.empty()) throw std::runtime_error("paths.corpus is not set");
  if (!std::filesystem::exists(cfg.corpus_path)) throw std::runtime_error("corpus file not found: " + cfg.corpus_path);
  return train(cfg, synth::load_corpus(cfg.corpus_path), opt);
}

}  // namespace laqd::train

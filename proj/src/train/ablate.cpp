// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/train/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "laqd/train/trainer.hpp"

namespace laqd::train {

namespace {

using nlohmann::ordered_json;

std::string scalar_text(const ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (const auto& e : v) s += (s.empty() ? "" : ", ") + scalar_text(e);
    return "[" + s + "]";
  }
  return v.dump();
}

std::vector<std::string> overrides_of(const ordered_json& obj, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object of key/value pairs");
  std::vector<std::string> out;
  for (const auto& [k, v] : obj.items()) out.push_back(k + "=" + scalar_text(v));
  return out;
}

ordered_json eval_json(const EvalSummary& s) { return ordered_json::parse(summary_json(s)); }

}  // namespace

AblationMatrix parse_matrix(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("ablation matrix: ") + e.what());
  }
  AblationMatrix m;
  if (j.contains("base")) m.base = overrides_of(j["base"], "base");
  if (j.contains("seeds")) {
    m.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  } else if (j.contains("n_seeds")) {
    m.seeds.clear();
    for (std::uint64_t s = 1; s <= j["n_seeds"].get<std::uint64_t>(); ++s) m.seeds.push_back(s);
  }
  if (j.contains("out_dir")) m.out_dir = j["out_dir"].get<std::string>();
  if (!j.contains("runs") || !j["runs"].is_array() || j["runs"].empty()) {
    throw ConfigError("ablation matrix needs a non-empty \"runs\" array");
  }
  for (const auto& r : j["runs"]) {
    AblationRun run;
    run.name = r.value("name", "run" + std::to_string(m.runs.size()));
    if (r.contains("set")) run.overrides = overrides_of(r["set"], "run " + run.name);
    m.runs.push_back(std::move(run));
  }
  if (m.seeds.empty()) throw ConfigError("ablation matrix needs at least one seed");
  // Validate every member up front so that typos fail before hours of training.
  for (const auto& run : m.runs) member_config(m, run, m.seeds.front()).validate();
  return m;
}

AblationMatrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ablation matrix " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_matrix(ss.str());
}

TrainConfig member_config(const AblationMatrix& m, const AblationRun& run, std::uint64_t seed) {
  TrainConfig cfg;
  for (const auto& s : m.base) apply_override(cfg, s);
  for (const auto& s : run.overrides) apply_override(cfg, s);
  cfg.seed.data = cfg.seed.model = cfg.seed.routing = seed;
  cfg.data.seed = seed;
  cfg.data.frozen_seed = cfg.seed.frozen;
  cfg.out_dir = (std::filesystem::path(m.out_dir) / run.name / ("seed" + std::to_string(seed))).string();
  return cfg;
}

bool AblationTable::ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.ok; });
}

std::vector<std::string> AblationTable::errors() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (!r.ok) out.push_back(r.name + " seed " + std::to_string(r.seed) + ": " + r.error);
  return out;
}

const AblationRow* AblationTable::find(const std::string& name, std::uint64_t seed) const {
  for (const auto& r : rows)
    if (r.name == name && r.seed == seed) return &r;
  return nullptr;
}

std::string AblationTable::json() const {
  ordered_json rs = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["name"] = r.name;
    o["seed"] = r.seed;
    o["ok"] = r.ok;
    if (r.ok) {
      o["steps"] = r.steps;
      o["best_step"] = r.best_step;
      o["val"] = eval_json(r.best);
    } else {
      o["error"] = r.error;
    }
    rs.push_back(std::move(o));
  }
  ordered_json j;
  j["rows"] = std::move(rs);
  j["errors"] = errors();
  return j.dump(2) + "\n";
}

std::string AblationTable::text() const {
  std::size_t langs = 0;
  for (const auto& r : rows)
    if (r.ok && !r.best.l_in_by_language.empty()) langs = std::max<std::size_t>(langs, r.best.l_in_by_language.rbegin()->first + 1);
  std::size_t w = 4;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  std::string s;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s %5s %6s %10s %10s %8s", static_cast<int>(w), "name", "seed", "steps", "l_in",
                "l_out", "lid_acc");
  s += buf;
  for (std::size_t k = 0; k < langs; ++k) {
    std::snprintf(buf, sizeof buf, " %10s", ("l_in[" + std::to_string(k) + "]").c_str());
    s += buf;
  }
  s += "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %5llu ", static_cast<int>(w), r.name.c_str(),
                  static_cast<unsigned long long>(r.seed));
    s += buf;
    if (!r.ok) {
      s += "FAILED: " + r.error + "\n";
      continue;
    }
    const double acc = r.best.lid_accuracy.value_or(std::nan(""));
    std::snprintf(buf, sizeof buf, "%6zu %10.5f %10.5f %8.4f", r.steps, r.best.l_in, r.best.l_out, acc);
    s += buf;
    for (std::size_t k = 0; k < langs; ++k) {
      auto it = r.best.l_in_by_language.find(static_cast<int>(k));
      if (it == r.best.l_in_by_language.end()) {
        std::snprintf(buf, sizeof buf, " %10s", "-");
      } else {
        std::snprintf(buf, sizeof buf, " %10.5f", it->second);
      }
      s += buf;
    }
    s += "\n";
  }
  return s;
}

AblationTable run_ablation(const AblationMatrix& m, bool write_files,
                           const std::function<void(const std::string&)>& log) {
  AblationTable table;
  auto flush = [&] {
    if (!write_files) return;
    std::filesystem::create_directories(m.out_dir);
    std::ofstream(std::filesystem::path(m.out_dir) / "ablate.json") << table.json();
    std::ofstream(std::filesystem::path(m.out_dir) / "ablate.txt") << table.text();
  };
  for (const auto& run : m.runs) {
    for (std::uint64_t seed : m.seeds) {
      AblationRow row;
      row.name = run.name;
      row.seed = seed;
      try {
        const TrainConfig cfg = member_config(m, run, seed);
        const synth::Corpus corpus = synth::make_corpus(cfg.data);
        TrainOptions opt;
        opt.write_files = write_files;
        const TrainResult r = train(cfg, corpus, opt);
        row.ok = true;
        row.steps = r.steps;
        row.best_step = r.best_step;
        row.best = r.best;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      if (log) {
        log(run.name + " seed " + std::to_string(seed) +
            (row.ok ? " l_in " + std::to_string(row.best.l_in) : " FAILED: " + row.error));
      }
      table.rows.push_back(std::move(row));
      flush();
    }
  }
  flush();
  return table;
}

}  // namespace laqd::train

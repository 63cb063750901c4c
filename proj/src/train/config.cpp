// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/train/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace laqd::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw, const char* want) {
  const std::string v = unquote(raw);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) bad_value(key, raw, want);
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string v = unquote(raw);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, raw, "a boolean");
}

std::vector<double> parse_list(const std::string& key, const std::string& raw) {
  std::string v = trim(unquote(raw));
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') bad_value(key, raw, "a list like [1, 2]");
  v = trim(v.substr(1, v.size() - 2));
  std::vector<double> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item), "a number"));
  return out;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_double(v[i]);
  return s + "]";
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename Acc>
Field size_field(std::string key, Acc acc) {
  return {key, [acc](const TrainConfig& c) { return std::to_string(acc(const_cast<TrainConfig&>(c))); },
          [acc, key](TrainConfig& c, const std::string& v) {
            acc(c) = parse_number<std::size_t>(key, v, "a non-negative integer");
          }};
}

template <typename Acc>
Field u64_field(std::string key, Acc acc) {
  return {key, [acc](const TrainConfig& c) { return std::to_string(acc(const_cast<TrainConfig&>(c))); },
          [acc, key](TrainConfig& c, const std::string& v) {
            acc(c) = parse_number<std::uint64_t>(key, v, "a non-negative integer");
          }};
}

template <typename Acc>
Field real_field(std::string key, Acc acc) {
  return {key, [acc](const TrainConfig& c) { return fmt_double(acc(const_cast<TrainConfig&>(c))); },
          [acc, key](TrainConfig& c, const std::string& v) { acc(c) = parse_number<double>(key, v, "a number"); }};
}

template <typename Acc>
Field bool_field(std::string key, Acc acc) {
  return {key, [acc](const TrainConfig& c) { return std::string(acc(const_cast<TrainConfig&>(c)) ? "true" : "false"); },
          [acc, key](TrainConfig& c, const std::string& v) { acc(c) = parse_bool(key, v); }};
}

template <typename Acc>
Field string_field(std::string key, Acc acc) {
  return {key, [acc](const TrainConfig& c) { return quote(acc(const_cast<TrainConfig&>(c))); },
          [acc](TrainConfig& c, const std::string& v) { acc(c) = unquote(v); }};
}

template <typename Acc, typename Parse, typename Show>
Field enum_field(std::string key, Acc acc, Parse parse, Show show) {
  return {key, [acc, show](const TrainConfig& c) { return quote(show(acc(const_cast<TrainConfig&>(c)))); },
          [acc, parse](TrainConfig& c, const std::string& v) { acc(c) = parse(unquote(v)); }};
}

#define LAQD_ACC(expr) [](TrainConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back(size_field("data.languages", LAQD_ACC(data.languages)));
    f.push_back(size_field("data.vocab", LAQD_ACC(data.vocab)));
    f.push_back(size_field("data.d_speech", LAQD_ACC(data.d_speech)));
    f.push_back(size_field("data.frames_per_token", LAQD_ACC(data.frames_per_token)));
    f.push_back(size_field("data.min_tokens", LAQD_ACC(data.min_tokens)));
    f.push_back(size_field("data.max_tokens", LAQD_ACC(data.max_tokens)));
    f.push_back(real_field("data.noise_sigma", LAQD_ACC(data.noise_sigma)));
    f.push_back(size_field("data.n_train", LAQD_ACC(data.n_train)));
    f.push_back(size_field("data.n_val", LAQD_ACC(data.n_val)));
    f.push_back({"data.weights", [](const TrainConfig& c) { return fmt_list(c.data.weights); },
                 [](TrainConfig& c, const std::string& v) { c.data.weights = parse_list("data.weights", v); }});
    f.push_back(real_field("data.unknown_fraction", LAQD_ACC(data.unknown_fraction)));
    f.push_back(real_field("data.label_noise", LAQD_ACC(data.label_noise)));
    f.push_back(real_field("data.transition_alpha", LAQD_ACC(data.transition_alpha)));
    f.push_back(u64_field("data.seed", LAQD_ACC(data.seed)));
    f.push_back(enum_field("gate.variant", LAQD_ACC(gate.variant), gating::parse_gate_variant,
                           [](gating::GateVariant v) { return gating::to_string(v); }));
    f.push_back(size_field("gate.channels", LAQD_ACC(gate.channels)));
    f.push_back(size_field("gate.kernel", LAQD_ACC(gate.kernel)));
    f.push_back(size_field("gate.stride", LAQD_ACC(gate.stride)));
    f.push_back(size_field("gate.hidden", LAQD_ACC(gate.hidden)));
    f.push_back(enum_field("routing.mode", LAQD_ACC(routing_mode), routing::parse_routing_mode,
                           [](routing::RoutingMode m) { return routing::to_string(m); }));
    f.push_back(real_field("routing.anneal_fraction", LAQD_ACC(anneal_fraction)));
    f.push_back(bool_field("routing.static_queries", LAQD_ACC(static_queries)));
    f.push_back(enum_field("st.variant", LAQD_ACC(st_variant), routing::parse_st_variant,
                           [](routing::StVariant v) { return routing::to_string(v); }));
    f.push_back(size_field("projector.n_layers", LAQD_ACC(projector.n_layers)));
    f.push_back(size_field("projector.n_heads", LAQD_ACC(projector.n_heads)));
    f.push_back(size_field("projector.d_model", LAQD_ACC(projector.d_model)));
    f.push_back(size_field("projector.L", LAQD_ACC(projector.length)));
    f.push_back(bool_field("projector.self_attn", LAQD_ACC(projector.self_attn)));
    f.push_back(size_field("projector.ffn_mult", LAQD_ACC(projector.ffn_mult)));
    f.push_back(real_field("projector.init_std", LAQD_ACC(projector.init_std)));
    f.push_back(size_field("model.d_llm", LAQD_ACC(d_llm)));
    f.push_back(size_field("llm.layers", LAQD_ACC(llm_layers)));
    f.push_back(size_field("llm.heads", LAQD_ACC(llm_heads)));
    f.push_back(size_field("llm.ffn", LAQD_ACC(llm_ffn)));
    f.push_back(size_field("llm.max_frames", LAQD_ACC(llm_max_frames)));
    f.push_back(real_field("loss.lambda_in", LAQD_ACC(loss.lambda_in)));
    f.push_back(real_field("loss.lambda_out", LAQD_ACC(loss.lambda_out)));
    f.push_back(real_field("loss.lambda_lid", LAQD_ACC(loss.lambda_lid)));
    f.push_back(enum_field("loss.l2", LAQD_ACC(l2), losses::parse_l2_mode,
                           [](losses::L2Mode m) { return losses::to_string(m); }));
    f.push_back(real_field("optim.peak_lr", LAQD_ACC(optim.peak_lr)));
    f.push_back(size_field("optim.warmup_steps", LAQD_ACC(optim.warmup_steps)));
    f.push_back(size_field("optim.total_steps", LAQD_ACC(optim.total_steps)));
    f.push_back(real_field("optim.beta1", LAQD_ACC(optim.beta1)));
    f.push_back(real_field("optim.beta2", LAQD_ACC(optim.beta2)));
    f.push_back(real_field("optim.eps", LAQD_ACC(optim.eps)));
    f.push_back(real_field("optim.weight_decay", LAQD_ACC(optim.weight_decay)));
    f.push_back(real_field("optim.clip_norm", LAQD_ACC(optim.clip_norm)));
    f.push_back(size_field("train.batch_size", LAQD_ACC(batch_size)));
    f.push_back(size_field("train.log_every", LAQD_ACC(log_every)));
    f.push_back(size_field("validation.every_n_steps", LAQD_ACC(validation.every_n_steps)));
    f.push_back(size_field("validation.patience", LAQD_ACC(validation.patience)));
    f.push_back(size_field("validation.batch_size", LAQD_ACC(validation.batch_size)));
    f.push_back(u64_field("seed.data", LAQD_ACC(seed.data)));
    f.push_back(u64_field("seed.model", LAQD_ACC(seed.model)));
    f.push_back(u64_field("seed.frozen", LAQD_ACC(seed.frozen)));
    f.push_back(u64_field("seed.routing", LAQD_ACC(seed.routing)));
    f.push_back(string_field("paths.corpus", LAQD_ACC(corpus_path)));
    f.push_back(string_field("paths.out_dir", LAQD_ACC(out_dir)));
    f.push_back(bool_field("metrics.wall_time", LAQD_ACC(wall_time)));
    return f;
  }();
  return fields;
}

#undef LAQD_ACC

}  // namespace

void TrainConfig::validate() const {
  data.validate();
  projector.validate();
  loss.validate();
  if (optim.total_steps < 1) throw ConfigError("optim.total_steps must be >= 1");
  if (optim.warmup_steps >= optim.total_steps) throw ConfigError("optim.warmup_steps must be < optim.total_steps");
  if (!(optim.peak_lr > 0.0)) throw ConfigError("optim.peak_lr must be positive");
  if (optim.beta1 < 0.0 || optim.beta1 >= 1.0 || optim.beta2 < 0.0 || optim.beta2 >= 1.0) {
    throw ConfigError("optim.beta1 and optim.beta2 must lie in [0, 1)");
  }
  if (optim.weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
  if (validation.patience < 1) throw ConfigError("validation.patience must be >= 1");
  if (validation.every_n_steps < 1) throw ConfigError("validation.every_n_steps must be >= 1");
  if (validation.batch_size < 1 || batch_size < 1) throw ConfigError("batch sizes must be >= 1");
  if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
  if (!(anneal_fraction > 0.0)) throw ConfigError("routing.anneal_fraction must be > 0");
  if (static_queries && routing_mode != routing::RoutingMode::shared) {
    throw ConfigError("routing.static_queries requires routing.mode = shared");
  }
  if (d_llm < data.d_speech) throw ConfigError("model.d_llm must be >= data.d_speech");
  if (llm_heads < 1 || d_llm % llm_heads != 0) throw ConfigError("model.d_llm must be divisible by llm.heads");
  if (data.frames_per_token * data.max_tokens > llm_max_frames) {
    throw ConfigError("utterances can exceed llm.max_frames frames");
  }
}

void set_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : registry()) {
    if (f.key == key) {
      f.set(cfg, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_key(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string dump_config(const TrainConfig& cfg) {
  std::string out;
  for (const Field& f : registry()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : registry()) keys.push_back(f.key);
  return keys;
}

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line, prefix;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    // Strip comments outside quotes.
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      prefix = trim(line.substr(1, line.size() - 2));
      if (!prefix.empty()) prefix += ".";
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    out.emplace_back(prefix + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  for (const auto& [k, v] : parse_kv_text(text)) set_key(cfg, k, v);
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config file not found: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace laqd::train

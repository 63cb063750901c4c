// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/synthdata/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "laqd/stubs/frozen_stubs.hpp"
#include "laqd/util/binary_io.hpp"

namespace laqd::synth {

namespace {

constexpr std::uint32_t kCorpusVersion = 1;

// Stream tags under the data seed.
enum : std::uint64_t { kLanguageTag = 100, kTrainTag = 200, kValTag = 300, kAssignTrain = 400, kAssignVal = 500 };

Tensor dirichlet_rows(std::size_t n, double alpha, Rng& rng) {
  Tensor t({n, n});
  std::gamma_distribution<double> gam(alpha, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      // Floor keeps every transition reachable so rows stay strictly positive.
      const double v = gam(rng) + 1e-6;
      t.at(i, j) = v;
      s += v;
    }
    for (std::size_t j = 0; j < n; ++j) t.at(i, j) /= s;
  }
  return t;
}

std::uint32_t draw_index(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng), acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return static_cast<std::uint32_t>(i);
  }
  return static_cast<std::uint32_t>(probs.size() - 1);
}

std::vector<Utterance> make_split(const GenConfig& cfg, const std::vector<LanguageSpec>& langs, const Tensor& sig,
                                  std::size_t total, std::uint64_t split_tag, std::uint64_t assign_tag) {
  std::vector<double> w;
  for (const auto& l : langs) w.push_back(l.weight);
  const auto counts = allocate_counts(w, total);
  std::vector<int> assignment;
  for (std::size_t k = 0; k < counts.size(); ++k) assignment.insert(assignment.end(), counts[k], static_cast<int>(k));
  Rng assign_rng(diff::derive_seed(cfg.seed, assign_tag));
  std::shuffle(assignment.begin(), assignment.end(), assign_rng);

  std::vector<Utterance> out(total);
  const std::uint64_t split_seed = diff::derive_seed(cfg.seed, split_tag);
  for (std::size_t i = 0; i < total; ++i) {
    // Each utterance owns a stream, so generation order does not matter.
    Rng rng(diff::derive_seed(split_seed, i));
    const LanguageSpec& spec = langs[assignment[i]];
    std::uniform_int_distribution<std::size_t> len(cfg.min_tokens, cfg.max_tokens);
    std::uniform_int_distribution<std::uint32_t> first(0, static_cast<std::uint32_t>(cfg.vocab - 1));
    Utterance u;
    u.language = spec.id;
    const std::size_t n = len(rng);
    u.tokens.push_back(first(rng));
    while (u.tokens.size() < n) {
      const std::uint32_t prev = u.tokens.back();
      u.tokens.push_back(draw_index({spec.transition.data() + prev * cfg.vocab, cfg.vocab}, rng));
    }
    u.frames = render_speech(u.tokens, sig, spec, rng);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double c_unknown = coin(rng);
    const double c_noise = coin(rng);
    u.label = spec.id;
    if (c_unknown < cfg.unknown_fraction) {
      u.label = -1;
    } else if (cfg.languages > 1 && c_noise < cfg.label_noise) {
      std::uniform_int_distribution<int> other(0, static_cast<int>(cfg.languages) - 2);
      const int o = other(rng);
      u.label = o >= spec.id ? o + 1 : o;
    }
    out[i] = std::move(u);
  }
  return out;
}

void put_tensor(std::ostream& os, const Tensor& t) {
  io::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) io::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (double v : t.values()) io::put<double>(os, v);
}

Tensor get_tensor(std::istream& is) {
  const auto rank = io::get<std::uint8_t>(is);
  diff::Shape shape;
  for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(io::get<std::uint32_t>(is));
  std::vector<double> v(diff::shape_size(shape));
  for (auto& x : v) x = io::get<double>(is);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

void GenConfig::validate() const {
  if (languages < 1) throw ConfigError("data.languages must be >= 1");
  if (vocab < 2) throw ConfigError("data.vocab must be >= 2");
  if (d_speech < 1) throw ConfigError("data.d_speech must be >= 1");
  if (frames_per_token < 1) throw ConfigError("data.frames_per_token must be >= 1");
  if (min_tokens < 1 || min_tokens > max_tokens) throw ConfigError("need 1 <= data.min_tokens <= data.max_tokens");
  if (n_train < 1 || n_val < 1) throw ConfigError("data.n_train and data.n_val must be >= 1");
  if (!weights.empty() && weights.size() != languages) {
    throw ConfigError("data.weights has " + std::to_string(weights.size()) + " entries for " +
                      std::to_string(languages) + " languages");
  }
  for (double w : weights) {
    if (!(w > 0.0)) throw ConfigError("data.weights must be positive");
  }
  if (noise_sigma < 0.0) throw ConfigError("data.noise_sigma must be >= 0");
  if (unknown_fraction < 0.0 || unknown_fraction > 1.0) throw ConfigError("data.unknown_fraction must be in [0,1]");
  if (label_noise < 0.0 || label_noise > 1.0) throw ConfigError("data.label_noise must be in [0,1]");
  if (!(transition_alpha > 0.0)) throw ConfigError("data.transition_alpha must be positive");
}

std::vector<std::size_t> allocate_counts(std::span<const double> weights, std::size_t total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = static_cast<double>(total) * weights[k] / wsum;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    rem.emplace_back(exact - std::floor(exact), k);
  }
  // Largest fractional parts first; ties go to the lower language index.
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[rem[i % rem.size()].second];
  return counts;
}

Tensor render_speech(std::span<const std::uint32_t> tokens, const Tensor& signatures, const LanguageSpec& spec,
                     Rng& rng) {
  const std::size_t d = signatures.cols();
  const std::size_t r = spec.frames_per_token;
  Tensor frames({tokens.size() * r, d});
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= signatures.rows()) throw std::out_of_range("render_speech: token id outside vocabulary");
    const double* s = signatures.data() + tokens[t] * d;
    for (std::size_t rep = 0; rep < r; ++rep) {
      double* f = frames.data() + (t * r + rep) * d;
      for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += spec.render_map.at(i, j) * s[j];
        f[i] = acc;
      }
      if (spec.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < d; ++i) f[i] += spec.noise_sigma * noise(rng);
      }
    }
  }
  return frames;
}

Corpus make_corpus(const GenConfig& cfg) {
  cfg.validate();
  Corpus c;
  c.config = cfg;
  const Tensor sig = stubs::token_signatures(cfg.vocab, cfg.d_speech, cfg.frozen_seed);
  for (std::size_t k = 0; k < cfg.languages; ++k) {
    Rng rng(diff::derive_seed(cfg.seed, kLanguageTag + k));
    LanguageSpec spec;
    spec.id = static_cast<int>(k);
    spec.transition = dirichlet_rows(cfg.vocab, cfg.transition_alpha, rng);
    spec.render_map = diff::orthonormal(cfg.d_speech, cfg.d_speech, rng);
    spec.frames_per_token = cfg.frames_per_token;
    spec.noise_sigma = cfg.noise_sigma;
    spec.weight = cfg.weights.empty() ? 1.0 : cfg.weights[k];
    c.languages.push_back(std::move(spec));
  }
  c.train = make_split(cfg, c.languages, sig, cfg.n_train, kTrainTag, kAssignTrain);
  c.val = make_split(cfg, c.languages, sig, cfg.n_val, kValTag, kAssignVal);
  return c;
}

Batch make_batch(std::span<const Utterance> utts, std::span<const std::size_t> indices, std::uint32_t pad_id) {
  if (utts.empty()) throw std::invalid_argument("make_batch: empty corpus");
  if (indices.empty()) throw std::invalid_argument("make_batch: batch size must be >= 1");
  const std::size_t d = utts[indices[0]].frames.cols();
  std::size_t tmax = 0, nmax = 0;
  for (auto i : indices) {
    if (utts[i].tokens.empty()) throw std::invalid_argument("make_batch: utterance without tokens");
    tmax = std::max(tmax, utts[i].num_frames());
    nmax = std::max(nmax, utts[i].tokens.size());
  }
  Batch b;
  const std::size_t B = indices.size();
  b.frames = Tensor({B * tmax, d});
  b.frame_layout = SeqLayout{B, tmax, {}};
  b.token_layout = SeqLayout{B, nmax, {}};
  b.tokens.assign(B * nmax, pad_id);
  for (std::size_t k = 0; k < B; ++k) {
    const Utterance& u = utts[indices[k]];
    std::copy_n(u.frames.data(), u.frames.size(), b.frames.data() + k * tmax * d);
    std::copy(u.tokens.begin(), u.tokens.end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(k * nmax));
    b.frame_layout.valid.push_back(u.num_frames());
    b.token_layout.valid.push_back(u.tokens.size());
    b.labels.push_back(u.label);
    b.languages.push_back(u.language);
  }
  return b;
}

Batch pad_batch(const Batch& batch, std::size_t extra_frames, std::size_t extra_tokens, std::uint32_t pad_id) {
  Batch out = batch;
  const std::size_t B = batch.size(), d = batch.frames.cols();
  const std::size_t t0 = batch.frame_layout.length, t1 = t0 + extra_frames;
  const std::size_t n0 = batch.token_layout.length, n1 = n0 + extra_tokens;
  out.frames = Tensor({B * t1, d});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(batch.frames.data() + b * t0 * d, t0 * d, out.frames.data() + b * t1 * d);
  }
  out.tokens.assign(B * n1, pad_id);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(batch.tokens.begin() + static_cast<std::ptrdiff_t>(b * n0), n0,
                out.tokens.begin() + static_cast<std::ptrdiff_t>(b * n1));
  }
  out.frame_layout.length = t1;
  out.token_layout.length = n1;
  return out;
}

EpochSampler::EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) {
  if (n == 0) throw std::invalid_argument("EpochSampler: empty corpus");
  reshuffle();
}

void EpochSampler::reshuffle() {
  order_.resize(n_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> EpochSampler::next(std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("EpochSampler: batch size must be >= 1");
  if (cursor_ >= n_) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(n_, cursor_ + batch_size);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return out;
}

std::string EpochSampler::save_state() const {
  std::ostringstream os;
  os << n_ << ' ' << cursor_ << ' ' << epoch_ << ' ' << rng_;
  for (auto i : order_) os << ' ' << i;
  return os.str();
}

void EpochSampler::load_state(const std::string& bytes) {
  std::istringstream is(bytes);
  std::size_t n = 0;
  is >> n >> cursor_ >> epoch_ >> rng_;
  if (!is || n != n_) throw io::FormatError("sampler state does not match corpus size");
  order_.resize(n_);
  for (auto& i : order_) is >> i;
  if (!is) throw io::FormatError("truncated sampler state");
}

std::string gen_config_json(const GenConfig& cfg) {
  nlohmann::ordered_json j;
  j["languages"] = cfg.languages;
  j["vocab"] = cfg.vocab;
  j["d_speech"] = cfg.d_speech;
  j["frames_per_token"] = cfg.frames_per_token;
  j["min_tokens"] = cfg.min_tokens;
  j["max_tokens"] = cfg.max_tokens;
  j["noise_sigma"] = cfg.noise_sigma;
  j["n_train"] = cfg.n_train;
  j["n_val"] = cfg.n_val;
  j["weights"] = cfg.weights;
  j["unknown_fraction"] = cfg.unknown_fraction;
  j["label_noise"] = cfg.label_noise;
  j["transition_alpha"] = cfg.transition_alpha;
  j["seed"] = cfg.seed;
  j["frozen_seed"] = cfg.frozen_seed;
  return j.dump(2);
}

namespace {

GenConfig gen_config_from_json(const std::string& s) {
  const auto j = nlohmann::json::parse(s);
  GenConfig c;
  c.languages = j.at("languages");
  c.vocab = j.at("vocab");
  c.d_speech = j.at("d_speech");
  c.frames_per_token = j.at("frames_per_token");
  c.min_tokens = j.at("min_tokens");
  c.max_tokens = j.at("max_tokens");
  c.noise_sigma = j.at("noise_sigma");
  c.n_train = j.at("n_train");
  c.n_val = j.at("n_val");
  c.weights = j.at("weights").get<std::vector<double>>();
  c.unknown_fraction = j.at("unknown_fraction");
  c.label_noise = j.at("label_noise");
  c.transition_alpha = j.at("transition_alpha");
  c.seed = j.at("seed");
  c.frozen_seed = j.at("frozen_seed");
  return c;
}

void put_utterances(std::ostream& os, const std::vector<Utterance>& us) {
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(us.size()));
  for (const auto& u : us) {
    io::put<std::int32_t>(os, u.label);
    io::put<std::int32_t>(os, u.language);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(u.tokens.size()));
    for (auto t : u.tokens) io::put<std::uint32_t>(os, t);
    put_tensor(os, u.frames);
  }
}

std::vector<Utterance> get_utterances(std::istream& is) {
  std::vector<Utterance> us(io::get<std::uint32_t>(is));
  for (auto& u : us) {
    u.label = io::get<std::int32_t>(is);
    u.language = io::get<std::int32_t>(is);
    u.tokens.resize(io::get<std::uint32_t>(is));
    for (auto& t : u.tokens) t = io::get<std::uint32_t>(is);
    u.frames = get_tensor(is);
  }
  return us;
}

}  // namespace

void write_corpus(std::ostream& os, const Corpus& c) {
  io::put_magic(os, "LAQC");
  io::put<std::uint32_t>(os, kCorpusVersion);
  io::put_string(os, gen_config_json(c.config));
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.languages.size()));
  for (const auto& l : c.languages) {
    io::put<std::int32_t>(os, l.id);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(l.frames_per_token));
    io::put<double>(os, l.noise_sigma);
    io::put<double>(os, l.weight);
    put_tensor(os, l.transition);
    put_tensor(os, l.render_map);
  }
  put_utterances(os, c.train);
  put_utterances(os, c.val);
}

Corpus read_corpus(std::istream& is) {
  io::expect_magic(is, "LAQC");
  const auto version = io::get<std::uint32_t>(is);
  if (version != kCorpusVersion) throw io::FormatError("unsupported corpus version " + std::to_string(version));
  Corpus c;
  c.config = gen_config_from_json(io::get_string(is));
  c.languages.resize(io::get<std::uint32_t>(is));
  for (auto& l : c.languages) {
    l.id = io::get<std::int32_t>(is);
    l.frames_per_token = io::get<std::uint32_t>(is);
    l.noise_sigma = io::get<double>(is);
    l.weight = io::get<double>(is);
    l.transition = get_tensor(is);
    l.render_map = get_tensor(is);
  }
  c.train = get_utterances(is);
  c.val = get_utterances(is);
  return c;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_corpus(os, corpus);
  std::ofstream js(path + ".json");
  js << gen_config_json(corpus.config) << '\n';
}

Corpus load_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("corpus file not found: " + path);
  return read_corpus(is);
}

}  // namespace laqd::synth

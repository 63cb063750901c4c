// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "laqd/diffcore/ops.hpp"
#include "laqd/diffcore/random.hpp"
#include "laqd/diffcore/tensor.hpp"
#include "laqd/util/errors.hpp"

namespace laqd::synth {

using diff::Rng;
using diff::SeqLayout;
using diff::Tensor;

using laqd::ConfigError;

struct GenConfig {
  std::size_t languages = 4;
  std::size_t vocab = 64;
  std::size_t d_speech = 32;
  std::size_t frames_per_token = 4;
  std::size_t min_tokens = 4;
  std::size_t max_tokens = 12;
  double noise_sigma = 0.05;
  std::size_t n_train = 4000;
  std::size_t n_val = 512;
  /// Relative sampling weight per language; empty means uniform.
  std::vector<double> weights{10.0, 1.0, 1.0, 1.0};
  /// Fraction of labels replaced by -1.
  double unknown_fraction = 0.1;
  /// Fraction of known labels replaced by a different language.
  double label_noise = 0.0;
  /// Dirichlet concentration of each transition-matrix row.
  double transition_alpha = 0.2;
  std::uint64_t seed = 1;
  /// Seed of the token signature table shared with the frozen stubs.
  std::uint64_t frozen_seed = 7;

  void validate() const;
};

struct LanguageSpec {
  int id = 0;
  Tensor transition;  // vocab x vocab, row-stochastic
  Tensor render_map;  // d_speech x d_speech, orthogonal
  std::size_t frames_per_token = 1;
  double noise_sigma = 0.0;
  double weight = 1.0;
};

struct Utterance {
  std::vector<std::uint32_t> tokens;
  Tensor frames;       // T x d_speech, T = frames_per_token * tokens.size()
  int label = -1;      // annotation, -1 = unknown
  int language = 0;    // true language, for per-language reporting

  std::size_t num_frames() const { return frames.rows(); }
};

struct Corpus {
  GenConfig config;
  std::vector<LanguageSpec> languages;
  std::vector<Utterance> train;
  std::vector<Utterance> val;
};

/// Padded minibatch. Frames are stacked (batch*max_frames) x d_speech and
/// tokens batch*max_tokens; masks are the valid prefix lengths.
struct Batch {
  Tensor frames;
  SeqLayout frame_layout;
  std::vector<std::uint32_t> tokens;
  SeqLayout token_layout;
  std::vector<int> labels;
  std::vector<int> languages;

  std::size_t size() const { return labels.size(); }
};

/// Per-language counts proportional to weights, largest-remainder rounding.
std::vector<std::size_t> allocate_counts(std::span<const double> weights, std::size_t total);

Corpus make_corpus(const GenConfig& cfg);

/// Repeats each token's signature frames_per_token times, maps it through
/// the language render map and adds Gaussian noise.
Tensor render_speech(std::span<const std::uint32_t> tokens, const Tensor& signatures, const LanguageSpec& spec,
                     Rng& rng);

/// Pads the selected utterances into one batch.
Batch make_batch(std::span<const Utterance> utts, std::span<const std::size_t> indices, std::uint32_t pad_id);

/// Extends a batch with extra padded frames/tokens (testing masking).
Batch pad_batch(const Batch& batch, std::size_t extra_frames, std::size_t extra_tokens, std::uint32_t pad_id);

/// Uniform sampling without replacement inside an epoch; the last batch of
/// an epoch may be short.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed);

  std::vector<std::size_t> next(std::size_t batch_size);
  std::size_t epoch() const { return epoch_; }

  std::string save_state() const;
  void load_state(const std::string& bytes);

 private:
  void reshuffle();

  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

// Binary corpus file ("LAQC"). Frames are stored as float64.
void write_corpus(std::ostream& os, const Corpus& corpus);
Corpus read_corpus(std::istream& is);
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);
/// JSON rendering of the generation config (the corpus sidecar).
std::string gen_config_json(const GenConfig& cfg);

}  // namespace laqd::synth

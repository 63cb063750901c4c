// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

// laqd command line: corpus generation, training, evaluation, gradient
// checking and ablation runs.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "laqd/train/ablate.hpp"
#include "laqd/train/config.hpp"
#include "laqd/train/gradcheck.hpp"
#include "laqd/train/trainer.hpp"

using namespace laqd;

namespace {

train::TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  train::TrainConfig cfg = path.empty() ? train::TrainConfig{} : train::load_config(path);
  for (const auto& s : sets) train::apply_override(cfg, s);
  return cfg;
}

int cmd_gen_data(const std::string& config, const std::vector<std::string>& sets, const std::string& out) {
  auto cfg = resolve_config(config, sets);
  cfg.data.frozen_seed = cfg.seed.frozen;
  const auto corpus = synth::make_corpus(cfg.data);
  if (auto dir = std::filesystem::path(out).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  synth::save_corpus(out, corpus);
  std::cout << "wrote " << out << " (" << corpus.train.size() << " train, " << corpus.val.size() << " val)\n";
  return 0;
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets, const std::string& resume,
              std::size_t stop_after, bool quiet) {
  const auto cfg = resolve_config(config, sets);
  train::TrainOptions opt;
  opt.resume = resume;
  opt.stop_after = stop_after;
  if (!quiet) opt.log = [](const std::string& m) { std::cerr << m << '\n'; };
  const auto r = train::train_from_config(cfg, opt);
  std::cout << "steps " << r.steps << " best_step " << r.best_step << (r.early_stopped ? " (early stop)" : "")
            << "\nbest " << train::summary_json(r.best) << "\nmetrics " << r.metrics_path << "\nbest checkpoint "
            << r.best_checkpoint << "\n";
  if (r.frozen_hash_before != r.frozen_hash_after) {
    std::cerr << "frozen stub parameters changed during training\n";
    return 3;
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& split, const std::string& corpus_path,
             std::size_t batch) {
  const auto ck = train::load_checkpoint(ckpt);
  auto model = train::load_model(ck);
  const std::string path = corpus_path.empty() ? model->config().corpus_path : corpus_path;
  if (path.empty()) throw std::runtime_error("no corpus: pass --corpus or set paths.corpus in the training config");
  const auto corpus = synth::load_corpus(path);
  if (split != "val" && split != "train") throw std::runtime_error("--split must be val or train");
  const auto& utts = split == "val" ? corpus.val : corpus.train;
  const auto s = train::evaluate(*model, utts, batch ? batch : model->config().validation.batch_size);
  std::cout << train::summary_json(s) << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& config, const std::vector<std::string>& sets) {
  train::TrainConfig cfg = config.empty() ? train::gradcheck_config() : train::load_config(config);
  for (const auto& s : sets) train::apply_override(cfg, s);
  const auto rep = train::run_gradcheck(cfg);
  std::cout << rep.table();
  if (!rep.pass()) {
    std::cerr << "gradcheck failed for:";
    for (const auto& o : rep.offenders()) std::cerr << "\n  " << o;
    std::cerr << "\n";
    return 1;
  }
  return 0;
}

int cmd_ablate(const std::string& matrix, const std::string& out, bool quiet) {
  auto m = train::load_matrix(matrix);
  if (!out.empty()) m.out_dir = out;
  auto log = quiet ? std::function<void(const std::string&)>{} : [](const std::string& s) { std::cerr << s << '\n'; };
  const auto table = train::run_ablation(m, true, log);
  std::cout << table.text() << "written to " << m.out_dir << "/ablate.{json,txt}\n";
  if (!table.ok()) {
    std::cerr << "failed runs:";
    for (const auto& e : table.errors()) std::cerr << "\n  " << e;
    std::cerr << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"laqd: language-aware query distillation on synthetic speech"};
  app.require_subcommand(1);

  std::string config, out, resume;
  std::vector<std::string> sets;
  std::size_t stop_after = 0;
  bool quiet = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--config", config, "config file");
  gen->add_option("--out", out, "output corpus file")->required();
  gen->add_option("--set", sets, "key=value override (repeatable)");

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config, "config file");
  tr->add_option("--set", sets, "key=value override (repeatable)");
  tr->add_option("--resume", resume, "checkpoint to resume from");
  tr->add_option("--stop-after", stop_after, "stop after this many total steps");
  tr->add_flag("--quiet", quiet, "no progress output");

  auto* cf = app.add_subcommand("config", "print the resolved configuration");
  cf->add_option("--config", config, "config file");
  cf->add_option("--set", sets, "key=value override (repeatable)");

  std::string ckpt, split = "val", corpus, matrix;
  std::size_t batch = 0;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
  ev->add_option("--split", split, "val or train");
  ev->add_option("--corpus", corpus, "corpus file (default: the training corpus)");
  ev->add_option("--batch", batch, "evaluation batch size");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of all trainable gradients");
  gc->add_option("--config", config, "config file (default: built-in tiny config)");
  gc->add_option("--set", sets, "key=value override (repeatable)");

  auto* ab = app.add_subcommand("ablate", "train a matrix of configs over several seeds");
  ab->add_option("--matrix", matrix, "JSON ablation matrix")->required();
  ab->add_option("--out", out, "output directory (overrides the matrix)");
  ab->add_flag("--quiet", quiet, "no progress output");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_data(config, sets, out);
    if (*tr) return cmd_train(config, sets, resume, stop_after, quiet);
    if (*cf) {
      std::cout << train::dump_config(resolve_config(config, sets));
      return 0;
    }
    if (*ev) return cmd_eval(ckpt, split, corpus, batch);
    if (*gc) return cmd_gradcheck(config, sets);
    if (*ab) return cmd_ablate(matrix, out, quiet);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

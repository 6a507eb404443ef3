// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// triad: pretrain, finetune, eval, generate-data, acd, ablate.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "triad/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "triad-out";
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "key = value configuration file");
  app->add_option("--seed", o.seed, "overrides the config seed");
  app->add_option("--out", o.out, "output directory")->capture_default_str();
}

triad::TrainConfig load_config(const CommonOptions& o) {
  triad::TrainConfig c = o.config.empty() ? triad::TrainConfig{} : triad::TrainConfig::load(o.config);
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw triad::ConfigError("cannot write " + (dir / name).string());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tri-modality pretraining on synthetic vision/audio/text data"};
  app.require_subcommand(1);

  CommonOptions pre_opts;
  auto* pre = app.add_subcommand("pretrain", "train from scratch");
  add_common(pre, pre_opts);

  CommonOptions ft_opts;
  std::string ft_checkpoint, ft_task = "retrieval", ft_group = "T-AV";
  auto* ft = app.add_subcommand("finetune", "single-objective fine-tuning of a checkpoint");
  add_common(ft, ft_opts);
  ft->add_option("--checkpoint", ft_checkpoint, "checkpoint to start from")->required();
  ft->add_option("--task", ft_task, "retrieval, caption or qa")->capture_default_str();
  ft->add_option("--group", ft_group, "modality group")->capture_default_str();

  CommonOptions ev_opts;
  std::string ev_checkpoint;
  bool ev_dual_softmax = false;
  auto* ev = app.add_subcommand("eval", "retrieval, caption and QA metrics of a checkpoint");
  add_common(ev, ev_opts);
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint to evaluate")->required();
  ev->add_flag("--dual-softmax", ev_dual_softmax, "rerank with dual softmax");

  CommonOptions gd_opts;
  std::size_t gd_count = 256;
  auto* gd = app.add_subcommand("generate-data", "write a synthetic dataset and its held-out splits");
  add_common(gd, gd_opts);
  gd->add_option("--count", gd_count, "training examples")->capture_default_str();

  CommonOptions acd_opts;
  std::string acd_captions, acd_ontology;
  auto* acd = app.add_subcommand("acd", "audio concept density of a caption corpus");
  add_common(acd, acd_opts);
  acd->add_option("--captions", acd_captions, "one caption per line")->required();
  acd->add_option("--ontology", acd_ontology, "one concept phrase per line")->required();

  CommonOptions ab_opts;
  auto* ab = app.add_subcommand("ablate", "run the configured ablation grid");
  add_common(ab, ab_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pre) {
      const auto config = load_config(pre_opts);
      const triad::Trainer t = triad::pretrain(config, pre_opts.out);
      std::cout << triad::format_metrics(t.evaluate()) << '\n';
    } else if (*ft) {
      const auto config = load_config(ft_opts);
      const triad::Trainer t =
          triad::finetune(ft_checkpoint, triad::parse_task(ft_task), ft_group, ft_opts.out, config);
      std::cout << triad::format_metrics(t.evaluate()) << '\n';
    } else if (*ev) {
      const triad::Trainer t = triad::Trainer::load(ev_checkpoint);
      auto out = open_output(ev_opts.out, "retrieval.txt");
      const auto reports = t.evaluate_retrieval(t.config().eval_groups, ev_dual_softmax);
      for (const auto& r : reports) triad::write_report(out, r);
      for (const auto& r : reports) {
        std::cout << "group=" << r.group << " r1=" << r.r1 << " r5=" << r.r5 << " r10=" << r.r10 << '\n';
      }
    } else if (*gd) {
      const auto config = load_config(gd_opts);
      triad::Rng rng(config.seed);
      std::vector<triad::TriModalExample> train;
      const auto synth = config.synth_config();
      for (std::size_t i = 0; i < gd_count; ++i) train.push_back(triad::generate_example(synth, rng, true));
      triad::write_dataset(fs::path(gd_opts.out) / "train", train);
      for (std::size_t s = 0; s < config.eval_splits; ++s) {
        triad::write_dataset(fs::path(gd_opts.out) / ("eval" + std::to_string(s)), triad::eval_split(config, s));
      }
      std::cout << "wrote " << gd_count << " training examples and " << config.eval_splits << " eval splits to "
                << gd_opts.out << '\n';
    } else if (*acd) {
      const auto result = triad::acd(triad::read_lines(acd_captions), triad::read_lines(acd_ontology));
      auto out = open_output(acd_opts.out, "acd.txt");
      out.precision(17);
      out << "concepts=" << result.concepts << " words=" << result.words << " acd=" << result.density << '\n';
      std::cout << "concepts=" << result.concepts << " words=" << result.words << " acd=" << result.density << '\n';
    } else if (*ab) {
      const auto config = load_config(ab_opts);
      auto log = open_output(ab_opts.out, "ablation.log");
      const auto table = triad::run_ablation(config, &log);
      const std::string text = triad::format_ablation_table(table);
      open_output(ab_opts.out, "ablation.md") << text;
      std::cout << text;
    }
  } catch (const triad::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

/* Copyright 2026 The LSCL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// lscl: command-line driver for data generation, training and evaluation.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lscl/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitBadArgs = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method = "lscl";
  std::optional<bool> tta;
  std::size_t dump_stages = 0;
  std::vector<std::string> checkpoints;
};

lscl::ExperimentConfig resolve_config(const Options& o) {
  lscl::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = lscl::load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.tta) cfg.tta = *o.tta;
  return cfg;
}

// NAME or NAME=PATH; a bare name resolves to <out>/checkpoints/NAME.ckpt.
std::vector<lscl::NamedCheckpoint> resolve_checkpoints(const Options& o, const lscl::OutputLayout& out) {
  std::vector<lscl::NamedCheckpoint> list;
  for (const auto& spec : o.checkpoints) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      list.push_back({spec, out.checkpoint(spec)});
    } else {
      if (eq == 0) throw lscl::InvalidArgument("checkpoint spec '" + spec + "' has no name");
      list.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
    }
  }
  if (list.empty()) {
    for (const char* name : {"baseline", "random-style", "scl", "lscl", "mixup"}) {
      if (std::filesystem::exists(out.checkpoint(name))) list.push_back({name, out.checkpoint(name)});
    }
  }
  if (list.empty()) throw lscl::MissingInputError("no checkpoints found under " + (out.root / "checkpoints").string());
  for (const auto& c : list) {
    if (!std::filesystem::exists(c.path)) throw lscl::MissingInputError("checkpoint not found: " + c.path.string());
  }
  return list;
}

void print_scores(const lscl::EvalReport& rep) {
  for (const auto& s : rep.scores) {
    std::printf("%-14s DSC %.4f  HD %.3f  min-max %.3f\n", s.method.c_str(), s.dsc_score, s.hd_score, s.minmax);
  }
  std::printf("wall clock %.1f s\n", rep.wall_clock_seconds);
}

int run(const std::string& command, const Options& o) {
  const lscl::ExperimentConfig cfg = resolve_config(o);
  const lscl::OutputLayout out{cfg.out_dir};
  std::printf("config fingerprint %s\n", lscl::fingerprint(cfg).c_str());
  if (command == "gen-data") {
    lscl::cmd_gen_data(cfg, out);
    std::printf("datasets written to %s\n", out.data().string().c_str());
  } else if (command == "pretrain") {
    const lscl::PretrainResult r = lscl::cmd_pretrain(cfg, out);
    std::printf("final epoch loss %.6f\n", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back());
  } else if (command == "finetune") {
    const lscl::FinetuneResult r = lscl::cmd_finetune(cfg, out, o.method, o.dump_stages);
    std::printf("%s: %zu log rows, checkpoint %s\n", o.method.c_str(), r.log.rows.size(),
                out.checkpoint(o.method).string().c_str());
  } else if (command == "evaluate") {
    print_scores(lscl::cmd_evaluate(cfg, out, resolve_checkpoints(o, out), cfg.tta));
  } else if (command == "ablate") {
    const lscl::AblationResult r = lscl::cmd_ablate(cfg, out);
    print_scores(r.report);
    const lscl::OrderingCheck c = lscl::check_ordering(r);
    std::printf("unseen DSC baseline %.4f (seen %.4f)\n", r.unseen_dsc_baseline, r.seen_dsc_baseline);
    for (const auto& [m, v] : r.unseen_dsc) std::printf("unseen DSC %-14s %.4f\n", m.c_str(), v);
    std::printf("drop exists: %s\nlscl improves: %s\nordering lscl-tta >= lscl >= scl >= random-style: %s\n",
                c.drop_exists ? "yes" : "no", c.lscl_improves ? "yes" : "no", c.ordering_holds ? "yes" : "no");
  } else if (command == "hardness") {
    const lscl::HardnessCurve h = lscl::cmd_hardness(cfg, out);
    for (std::size_t s = 0; s < h.stage_mean_loss.size(); ++s) {
      std::printf("stage %zu mean loss %.6f\n", s, h.stage_mean_loss[s]);
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local style curriculum learning for robust segmentation"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--seed", o.seed, "master seed (overrides the config)");
    sub->add_option("--out", o.out, "output directory (overrides the config)");
  };

  add_common(app.add_subcommand("gen-data", "write synthetic train, style-pool and test splits"));
  add_common(app.add_subcommand("pretrain", "train the baseline U-Net with Adam"));
  CLI::App* ft = app.add_subcommand("finetune", "finetune the baseline with one method");
  add_common(ft);
  ft->add_option("--method", o.method, "lscl | scl | random-style | mixup | none");
  ft->add_option("--dump-stages", o.dump_stages, "write PGMs of the first N curriculum stages");
  CLI::App* ev = app.add_subcommand("evaluate", "evaluate checkpoints on every test vendor");
  add_common(ev);
  ev->add_option("--tta", o.tta, "also evaluate with rotation test-time augmentation");
  ev->add_option("--checkpoint", o.checkpoints, "NAME or NAME=PATH, repeatable");
  add_common(app.add_subcommand("ablate", "run the full ablation and print the ordering check"));
  add_common(app.add_subcommand("hardness", "stage losses of curriculum samples under the frozen baseline"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitBadArgs;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const lscl::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadArgs;
  } catch (const lscl::MissingInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissing;
  } catch (const lscl::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}

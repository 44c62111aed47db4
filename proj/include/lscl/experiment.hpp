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

#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lscl/curriculum.hpp"
#include "lscl/error.hpp"
#include "lscl/losses.hpp"
#include "lscl/stylegen.hpp"
#include "lscl/tta_eval.hpp"
#include "lscl/unet.hpp"

namespace lscl {

using json = nlohmann::json;

// Every knob of a run. Defaults are the desk-scale protocol: 20 epochs of
// Adam pretraining, 5 epochs of SGD-momentum curriculum finetuning.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  DatasetSpec data;  // data.seed is derived from `seed`
  UNetConfig model;

  int pretrain_epochs = 20;
  double pretrain_lr = 1e-3;
  std::size_t pretrain_batch = 4;

  CurriculumParams curriculum;
  int finetune_epochs = 5;
  double finetune_lr = 1e-3;
  double finetune_momentum = 0.9;
  double mixup_alpha = 0.2;
  bool rotate_augment = true;  // random quarter turns while training

  bool tta = true;
  std::size_t hardness_samples = 64;
  std::string out_dir = "lscl_out";
};

// Independent sub-seeds of the master seed.
enum class SeedStream : std::uint64_t { kData = 0, kInit = 1, kPretrain = 2, kFinetune = 3, kHardness = 4 };

inline std::uint64_t sub_seed(const ExperimentConfig& cfg, SeedStream s) {
  return Rng::derive(cfg.seed, static_cast<std::uint64_t>(s)).next_u64();
}

inline DatasetSpec dataset_spec(const ExperimentConfig& cfg) {
  DatasetSpec spec = cfg.data;
  spec.seed = sub_seed(cfg, SeedStream::kData);
  return spec;
}

// ---------------------------------------------------------------------------
// JSON

inline json style_to_json(const VendorStyle& s) {
  return json{{"name", s.name},
              {"class_intensity", s.class_intensity},
              {"gamma", s.gamma},
              {"noise_sigma", s.noise_sigma},
              {"bias_amplitude", s.bias_amplitude}};
}

inline json config_to_json(const ExperimentConfig& c) {
  json styles = json::array();
  for (const auto& s : c.data.styles) styles.push_back(style_to_json(s));
  return json{
      {"seed", c.seed},
      {"data",
       {{"image_size", c.data.image_size},
        {"train_per_vendor", c.data.train_per_vendor},
        {"train_vendors", c.data.train_vendors},
        {"style_pool_size", c.data.style_pool_size},
        {"test_per_vendor", c.data.test_per_vendor},
        {"test_vendors", c.data.test_vendors},
        {"styles", styles}}},
      {"model",
       {{"in_channels", c.model.in_channels},
        {"num_classes", c.model.num_classes},
        {"base_channels", c.model.base_channels},
        {"depth", c.model.depth}}},
      {"pretrain", {{"epochs", c.pretrain_epochs}, {"lr", c.pretrain_lr}, {"batch", c.pretrain_batch}}},
      {"curriculum",
       {{"n", c.curriculum.n},
        {"epsilon", c.curriculum.epsilon},
        {"pool_size", c.curriculum.pool_size},
        {"clamp_gamma", c.curriculum.clamp_gamma}}},
      {"finetune",
       {{"epochs", c.finetune_epochs},
        {"lr", c.finetune_lr},
        {"momentum", c.finetune_momentum},
        {"mixup_alpha", c.mixup_alpha}}},
      {"rotate_augment", c.rotate_augment},
      {"tta", c.tta},
      {"hardness_samples", c.hardness_samples},
      {"out_dir", c.out_dir},
  };
}

namespace config_detail {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config field '") + key + "': " + e.what());
  }
}

inline const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw InvalidArgument(std::string("config section '") + key + "' must be an object");
  return j.at(key);
}

}  // namespace config_detail

// Missing fields keep their defaults.
inline ExperimentConfig config_from_json(const json& j) {
  using config_detail::read;
  using config_detail::section;
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  ExperimentConfig c;
  read(j, "seed", c.seed);
  const json& d = section(j, "data");
  read(d, "image_size", c.data.image_size);
  read(d, "train_per_vendor", c.data.train_per_vendor);
  read(d, "train_vendors", c.data.train_vendors);
  read(d, "style_pool_size", c.data.style_pool_size);
  read(d, "test_per_vendor", c.data.test_per_vendor);
  read(d, "test_vendors", c.data.test_vendors);
  if (d.contains("styles")) {
    c.data.styles.clear();
    for (const json& s : d.at("styles")) {
      VendorStyle v;
      read(s, "name", v.name);
      read(s, "class_intensity", v.class_intensity);
      read(s, "gamma", v.gamma);
      read(s, "noise_sigma", v.noise_sigma);
      read(s, "bias_amplitude", v.bias_amplitude);
      v.validate();
      c.data.styles.push_back(v);
    }
  }
  const json& m = section(j, "model");
  read(m, "in_channels", c.model.in_channels);
  read(m, "num_classes", c.model.num_classes);
  read(m, "base_channels", c.model.base_channels);
  read(m, "depth", c.model.depth);
  c.model.validate();
  const json& p = section(j, "pretrain");
  read(p, "epochs", c.pretrain_epochs);
  read(p, "lr", c.pretrain_lr);
  read(p, "batch", c.pretrain_batch);
  const json& cu = section(j, "curriculum");
  read(cu, "n", c.curriculum.n);
  read(cu, "epsilon", c.curriculum.epsilon);
  read(cu, "pool_size", c.curriculum.pool_size);
  read(cu, "clamp_gamma", c.curriculum.clamp_gamma);
  const json& f = section(j, "finetune");
  read(f, "epochs", c.finetune_epochs);
  read(f, "lr", c.finetune_lr);
  read(f, "momentum", c.finetune_momentum);
  read(f, "mixup_alpha", c.mixup_alpha);
  read(j, "rotate_augment", c.rotate_augment);
  read(j, "tta", c.tta);
  read(j, "hardness_samples", c.hardness_samples);
  read(j, "out_dir", c.out_dir);
  if (c.pretrain_batch == 0) throw InvalidArgument("pretrain.batch must be positive");
  if (c.pretrain_epochs < 0 || c.finetune_epochs < 0) throw InvalidArgument("epochs must be >= 0");
  c.curriculum.validate(c.data.image_size, c.data.image_size);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return config_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw InvalidArgument("cannot parse config " + path.string() + ": " + e.what());
  }
}

// FNV-1a over the canonical JSON dump, as 16 hex digits.
inline std::string fingerprint(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("out_dir");  // where results go is not a run input
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Pipeline stages

struct PretrainResult {
  Model model;
  OptState opt;
  std::vector<double> epoch_loss;
};

// Adam on mini-batches of the training split.
inline PretrainResult pretrain(const ExperimentConfig& cfg, const Dataset& train) {
  if (train.empty()) throw MissingInputError("pretrain: empty training set");
  PretrainResult res{init_unet(cfg.model, sub_seed(cfg, SeedStream::kInit)),
                     OptState::adam(cfg.pretrain_lr), {}};
  Rng rng(sub_seed(cfg, SeedStream::kPretrain));
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(rng, train.size());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.pretrain_batch) {
      const std::size_t end = std::min(order.size(), start + cfg.pretrain_batch);
      const Tensor& first = train.samples[order[start]].image;
      const std::size_t plane = first.size();
      Tensor batch({end - start, first.dim(0), first.dim(1), first.dim(2)});
      std::vector<Sample> rotated;
      rotated.reserve(end - start);
      std::vector<const LabelMap*> labels;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = train.samples[order[k]];
        if (cfg.rotate_augment) {
          rotated.push_back(rot90(s, static_cast<int>(rng.below(4))));
        } else {
          rotated.push_back(s);
        }
        const Tensor& img = rotated.back().image;
        std::copy(img.data().begin(), img.data().end(), batch.raw() + (k - start) * plane);
      }
      for (const Sample& s : rotated) labels.push_back(&s.label);
      ad::Tape tape;
      const ad::NodeId in = tape.leaf(std::move(batch), false);
      const ForwardResult fwd = forward(res.model, tape, in);
      const ad::NodeId loss = combined_loss(tape, fwd.logits, labels);
      const ad::Gradients g = ad::backward(tape, loss);
      adam_step(res.model.params, collect_param_grads(g, fwd), res.opt);
      total += tape.value(loss)[0];
      ++batches;
    }
    res.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return res;
}

inline const std::vector<std::string>& finetune_methods() {
  static const std::vector<std::string> methods = {"lscl", "scl", "random-style", "mixup", "none"};
  return methods;
}

inline void require_method(const std::string& method) {
  for (const auto& m : finetune_methods()) {
    if (m == method) return;
  }
  std::string valid;
  for (const auto& m : finetune_methods()) valid += (valid.empty() ? "" : ", ") + m;
  throw InvalidArgument("unknown method '" + method + "' (valid: " + valid + ")");
}

struct FinetuneResult {
  Model model;
  OptState opt;
  TrainLog log;
};

// Finetunes a copy of `baseline` with a fresh SGD-momentum state. Every
// method draws from the same finetune stream so runs differ only by method.
inline FinetuneResult finetune(const ExperimentConfig& cfg, const Model& baseline,
                               const std::string& method, const Dataset& train,
                               const Dataset& style_pool, const FinetuneOptions* extra = nullptr) {
  require_method(method);
  FinetuneResult r{baseline, OptState::sgd_momentum(cfg.finetune_lr, cfg.finetune_momentum), {}};
  Rng rng(sub_seed(cfg, SeedStream::kFinetune));
  const int epochs = cfg.finetune_epochs;
  FinetuneOptions opts = extra ? *extra : FinetuneOptions{};
  opts.rotate = cfg.rotate_augment;
  if (method == "lscl") {
    opts.rule = IncrementRule::kLocalGradientSign;
    r.log = curriculum_finetune(r.model, train, style_pool, cfg.curriculum, r.opt, epochs, rng, opts);
  } else if (method == "scl") {
    opts.rule = IncrementRule::kPixelSign;
    r.log = curriculum_finetune(r.model, train, style_pool, cfg.curriculum, r.opt, epochs, rng, opts);
  } else if (method == "random-style") {
    CurriculumParams p = cfg.curriculum;
    p.n = 0;
    opts.initial_gamma = 1.0;
    r.log = curriculum_finetune(r.model, train, style_pool, p, r.opt, epochs, rng, opts);
  } else if (method == "mixup") {
    r.log = mixup_finetune(r.model, train, r.opt, epochs, rng, cfg.mixup_alpha,
                           cfg.rotate_augment);
  }
  return r;
}

// Structure-averaged DSC over the named vendors.
inline double mean_dsc(const MetricTable& t, const std::string& method,
                       const std::vector<std::string>& vendors) {
  double s = 0.0;
  for (const auto& v : vendors) s += t.mean(method, v, "DSC");
  return s / static_cast<double>(vendors.size());
}

struct AblationResult {
  EvalReport report;
  std::vector<double> pretrain_loss;
  std::map<std::string, TrainLog> logs;
  double seen_dsc_baseline = 0.0;
  double unseen_dsc_baseline = 0.0;
  std::map<std::string, double> unseen_dsc;  // per evaluated method
};

inline const std::vector<std::string>& ablation_rows() {
  static const std::vector<std::string> rows = {"baseline", "random-style", "scl", "lscl", "lscl-tta"};
  return rows;
}

// Baseline plus the three finetuned variants, plus LSCL evaluated with TTA.
// Vendors in data.train_vendors count as seen, the rest as unseen.
inline AblationResult run_ablation(const ExperimentConfig& cfg, const Datasets& data,
                                   const Model* baseline_in = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  AblationResult out;
  Model baseline;
  if (baseline_in) {
    baseline = *baseline_in;
  } else {
    PretrainResult pre = pretrain(cfg, data.train);
    baseline = std::move(pre.model);
    out.pretrain_loss = std::move(pre.epoch_loss);
  }

  std::vector<MetricTable> tables;
  tables.push_back(evaluate(baseline, data.test, false, "baseline"));
  for (const std::string method : {"random-style", "scl", "lscl"}) {
    FinetuneResult ft = finetune(cfg, baseline, method, data.train, data.style_pool);
    out.logs[method] = std::move(ft.log);
    tables.push_back(evaluate(ft.model, data.test, false, method));
    if (method == "lscl") tables.push_back(evaluate(ft.model, data.test, true, "lscl-tta"));
  }

  std::vector<std::string> seen, unseen;
  for (const auto& v : cfg.data.test_vendors) {
    bool is_seen = false;
    for (const auto& tv : cfg.data.train_vendors) is_seen = is_seen || tv == v;
    (is_seen ? seen : unseen).push_back(v);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.report = compare_report(tables, fingerprint(cfg), secs);
  if (!seen.empty()) out.seen_dsc_baseline = mean_dsc(out.report.table, "baseline", seen);
  if (!unseen.empty()) {
    out.unseen_dsc_baseline = mean_dsc(out.report.table, "baseline", unseen);
    for (const auto& row : ablation_rows()) out.unseen_dsc[row] = mean_dsc(out.report.table, row, unseen);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands. Each writes into an output directory and records the config
// fingerprint in <out>/manifest.json.

struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path checkpoint(const std::string& name) const {
    return root / "checkpoints" / (name + ".ckpt");
  }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path reports() const { return root / "reports"; }
};

inline void update_manifest(const OutputLayout& out, const ExperimentConfig& cfg,
                            const std::string& command, const std::vector<std::string>& files) {
  const auto path = out.root / "manifest.json";
  json manifest = json::object();
  if (std::filesystem::exists(path)) {
    try {
      manifest = json::parse(read_text_file(path));
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  manifest["fingerprint"] = fingerprint(cfg);
  manifest["config"] = config_to_json(cfg);
  manifest["commands"][command] = files;
  write_text_file(path, manifest.dump(2) + "\n");
}

inline Datasets read_datasets(const OutputLayout& out, const ExperimentConfig& cfg) {
  Datasets d;
  d.train = read_dataset(out.data(), "train");
  d.style_pool = read_dataset(out.data(), "style-pool");
  for (const auto& v : cfg.data.test_vendors) d.test.push_back(read_dataset(out.data(), "test-" + v));
  return d;
}

inline void cmd_gen_data(const ExperimentConfig& cfg, const OutputLayout& out) {
  const Datasets d = make_dataset(dataset_spec(cfg));
  write_dataset(d.train, out.data());
  write_dataset(d.style_pool, out.data());
  std::vector<std::string> files = {"data/train", "data/style-pool"};
  for (const auto& t : d.test) {
    write_dataset(t, out.data());
    files.push_back("data/" + t.split);
  }
  update_manifest(out, cfg, "gen-data", files);
}

inline PretrainResult cmd_pretrain(const ExperimentConfig& cfg, const OutputLayout& out) {
  const Dataset train = read_dataset(out.data(), "train");
  PretrainResult res = pretrain(cfg, train);
  save_checkpoint(res.model, &res.opt, out.checkpoint("baseline"));
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
    csv << e + 1 << ',' << format_fixed(res.epoch_loss[e], 9) << '\n';
  }
  write_text_file(out.logs() / "pretrain_loss.csv", csv.str());
  update_manifest(out, cfg, "pretrain", {"checkpoints/baseline.ckpt", "logs/pretrain_loss.csv"});
  return res;
}

// `dump_stages` > 0 writes the first that many curriculum samples z_i as PGM.
inline FinetuneResult cmd_finetune(const ExperimentConfig& cfg, const OutputLayout& out,
                                   const std::string& method, std::size_t dump_stages = 0) {
  require_method(method);
  const auto base_path = out.checkpoint("baseline");
  if (!std::filesystem::exists(base_path)) {
    throw MissingInputError("baseline checkpoint not found: " + base_path.string());
  }
  if (method == "none") {
    write_file_bytes(out.checkpoint("none"), read_file_bytes(base_path));
    update_manifest(out, cfg, "finetune:none", {"checkpoints/none.ckpt"});
    const Checkpoint ck = load_checkpoint(base_path);
    return {ck.model, ck.opt.value_or(OptState{}), {}};
  }
  const Checkpoint base = load_checkpoint(base_path);
  const Dataset train = read_dataset(out.data(), "train");
  const Dataset pool = read_dataset(out.data(), "style-pool");
  FinetuneOptions extra;
  if (dump_stages > 0) {
    extra.keep_snapshots = true;
    extra.snapshot_limit = dump_stages;
  }
  FinetuneResult res = finetune(cfg, base.model, method, train, pool, &extra);
  save_checkpoint(res.model, &res.opt, out.checkpoint(method));
  std::ostringstream csv;
  write_trainlog_csv(csv, res.log);
  write_text_file(out.logs() / (method + "_trainlog.csv"), csv.str());
  std::vector<std::string> files = {"checkpoints/" + method + ".ckpt", "logs/" + method + "_trainlog.csv"};
  if (dump_stages > 0) {
    const auto dir = out.logs() / (method + "_stages");
    for (std::size_t i = 0; i < res.log.snapshots.size(); ++i) {
      const Tensor& z = res.log.snapshots[i].z_i;
      const TrainLogRow& row = res.log.rows[i];
      write_text_file(dir / ("sample" + sample_stem(row.sample_idx) + "_stage" +
                             std::to_string(row.stage) + ".pgm"),
                      encode_pgm(image_to_u8(z), z.dim(1), z.dim(2)));
    }
    files.push_back("logs/" + method + "_stages");
  }
  update_manifest(out, cfg, "finetune:" + method, files);
  res.log.snapshots.clear();
  return res;
}

struct NamedCheckpoint {
  std::string method;
  std::filesystem::path path;
};

// Evaluates each checkpoint (and, with `tta`, each again with TTA under the
// name "<method>-tta"), then writes metrics.csv, summary.csv and report.json.
inline EvalReport cmd_evaluate(const ExperimentConfig& cfg, const OutputLayout& out,
                               const std::vector<NamedCheckpoint>& checkpoints, bool tta) {
  const auto t0 = std::chrono::steady_clock::now();
  if (checkpoints.empty()) throw InvalidArgument("evaluate: no checkpoints given");
  std::vector<Dataset> test;
  for (const auto& v : cfg.data.test_vendors) test.push_back(read_dataset(out.data(), "test-" + v));
  std::vector<MetricTable> tables;
  for (const auto& ck : checkpoints) {
    const Model model = load_checkpoint(ck.path).model;
    tables.push_back(evaluate(model, test, false, ck.method));
    if (tta) tables.push_back(evaluate(model, test, true, ck.method + "-tta"));
  }
  EvalReport rep;
  if (tables.size() >= 2) {
    rep = compare_report(tables, fingerprint(cfg));
  } else {
    rep.table = tables.front();
    rep.fingerprint = fingerprint(cfg);
    // Ranking needs two methods; a lone method gets its raw scores only.
    MethodScore s{checkpoints.front().method};
    for (const auto& v : rep.table.vendors()) {
      s.dsc_score += rep.table.mean(s.method, v, "DSC") / rep.table.vendors().size();
      s.hd_score += rep.table.mean(s.method, v, "HD") / rep.table.vendors().size();
    }
    rep.scores.push_back(s);
  }
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_report_csvs(rep, out.reports());

  json scores = json::array();
  for (const auto& s : rep.scores) {
    scores.push_back({{"method", s.method}, {"dsc_score", s.dsc_score}, {"hd_score", s.hd_score},
                      {"minmax_score", s.minmax}});
  }
  write_text_file(out.reports() / "report.json",
                  json{{"fingerprint", rep.fingerprint}, {"scores", scores}}.dump(2) + "\n");
  // Timing lives apart so every other output stays byte-reproducible.
  write_text_file(out.reports() / "timing.json",
                  json{{"wall_clock_seconds", rep.wall_clock_seconds}}.dump(2) + "\n");
  update_manifest(out, cfg, "evaluate", {"reports/metrics.csv", "reports/summary.csv", "reports/report.json"});
  return rep;
}

// Robustness ordering checks reported by the ablation command.
struct OrderingCheck {
  bool drop_exists = false;     // seen - unseen baseline DSC >= 0.02
  bool lscl_improves = false;   // lscl unseen DSC - baseline >= 0.02
  bool ordering_holds = false;  // lscl-tta >= lscl >= scl >= random-style (unseen DSC)
};

inline OrderingCheck check_ordering(const AblationResult& r) {
  OrderingCheck c;
  c.drop_exists = r.seen_dsc_baseline - r.unseen_dsc_baseline >= 0.02;
  c.lscl_improves = r.unseen_dsc.at("lscl") - r.unseen_dsc_baseline >= 0.02;
  c.ordering_holds = r.unseen_dsc.at("lscl-tta") >= r.unseen_dsc.at("lscl") &&
                     r.unseen_dsc.at("lscl") >= r.unseen_dsc.at("scl") &&
                     r.unseen_dsc.at("scl") >= r.unseen_dsc.at("random-style");
  return c;
}

// Full ablation from the datasets in <out>/data, generating them and the
// baseline when absent.
inline AblationResult cmd_ablate(const ExperimentConfig& cfg, const OutputLayout& out) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!std::filesystem::exists(out.data() / "train" / "index.csv")) cmd_gen_data(cfg, out);
  if (!std::filesystem::exists(out.checkpoint("baseline"))) cmd_pretrain(cfg, out);
  const Datasets data = read_datasets(out, cfg);
  const Model baseline = load_checkpoint(out.checkpoint("baseline")).model;
  AblationResult res = run_ablation(cfg, data, &baseline);
  res.report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_report_csvs(res.report, out.reports() / "ablation");
  for (const auto& [method, log] : res.logs) {
    std::ostringstream csv;
    write_trainlog_csv(csv, log);
    write_text_file(out.logs() / ("ablation_" + method + "_trainlog.csv"), csv.str());
  }
  const OrderingCheck oc = check_ordering(res);
  json scores = json::array();
  for (const auto& s : res.report.scores) {
    scores.push_back({{"method", s.method}, {"dsc_score", s.dsc_score}, {"hd_score", s.hd_score},
                      {"minmax_score", s.minmax}, {"unseen_dsc", res.unseen_dsc.at(s.method)}});
  }
  write_text_file(out.reports() / "ablation" / "report.json",
                  json{{"fingerprint", res.report.fingerprint},
                       {"scores", scores},
                       {"seen_dsc_baseline", res.seen_dsc_baseline},
                       {"unseen_dsc_baseline", res.unseen_dsc_baseline},
                       {"checks",
                        {{"drop_exists", oc.drop_exists},
                         {"lscl_improves", oc.lscl_improves},
                         {"ordering_holds", oc.ordering_holds}}}}
                          .dump(2) + "\n");
  write_text_file(out.reports() / "ablation" / "timing.json",
                  json{{"wall_clock_seconds", res.report.wall_clock_seconds}}.dump(2) + "\n");
  update_manifest(out, cfg, "ablate",
                  {"reports/ablation/metrics.csv", "reports/ablation/summary.csv",
                   "reports/ablation/report.json"});
  return res;
}

// Frozen-model stage losses (loss statistics of curriculum samples).
inline HardnessCurve cmd_hardness(const ExperimentConfig& cfg, const OutputLayout& out) {
  const Checkpoint base = load_checkpoint(out.checkpoint("baseline"));
  const Dataset train = read_dataset(out.data(), "train");
  const Dataset pool = read_dataset(out.data(), "style-pool");
  Rng rng(sub_seed(cfg, SeedStream::kHardness));
  HardnessCurve hc = hardness_curve(base.model, train, pool, cfg.curriculum, cfg.hardness_samples, rng);
  std::ostringstream csv;
  csv << "stage,mean_loss\n";
  for (std::size_t s = 0; s < hc.stage_mean_loss.size(); ++s) {
    csv << s << ',' << format_fixed(hc.stage_mean_loss[s], 9) << '\n';
  }
  write_text_file(out.reports() / "hardness.csv", csv.str());
  update_manifest(out, cfg, "hardness", {"reports/hardness.csv"});
  return hc;
}

}  // namespace lscl

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

// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Criteria 3 and 4 share one pretrained baseline per seed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fd_cases.hpp"
#include "lscl/experiment.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace lscl;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  double seconds = 0.0;
};

template <typename F>
Outcome timed(F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o = body();
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return o;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void fail(Outcome& o, const std::string& why) {
  o.pass = false;
  if (!o.detail.empty()) o.detail += "; ";
  o.detail += why;
}

// 1 -------------------------------------------------------------------------

Outcome gradients() {
  Outcome o;
  Rng rng(2024);
  double worst = 0.0;
  for (const auto& c : ad::primitive_cases()) {
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor x = ad::kink_free_input(rng, c.shape, c.lo, c.hi);
      const double err = ad::finite_difference_check(c.fn, x, {1e-5, 0, 0});
      worst = std::max(worst, err);
      if (err >= 1e-6) fail(o, std::string(c.name) + fmt(" err %.2e", err));
    }
  }

  // Full path: combined loss through the U-Net, w.r.t. the input and the weights.
  Model m = init_unet(UNetConfig{1, 4, 4, 2}, 9);
  for (auto& [name, p] : m.params)
    if (name.ends_with(".bias")) p = oracle::random_tensor(rng, p.shape(), -0.1, 0.1);  // off the relu kink
  LabelMap label(16, 16);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) label.at(y, x) = static_cast<std::uint8_t>((x / 4 + y / 8) % 4);
  const Tensor img = oracle::random_tensor(rng, {1, 1, 16, 16}, 0.0, 1.0);
  const double err_in = ad::finite_difference_check(
      [&](ad::Tape& t, ad::NodeId in) { return combined_loss(t, forward(m, t, in, false).logits, label); }, img,
      {1e-5, 64, 5});
  worst = std::max(worst, err_in);
  if (err_in >= 1e-6) fail(o, fmt("unet input err %.2e", err_in));

  std::size_t coords = 0;
  for (const auto& [name, p] : m.params) {
    Rng pick(coords + 1);
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = pick.below(p.size());
      auto loss_at = [&](double v) {
        Model probe = m;
        probe.params[name][i] = v;
        ad::Tape t;
        return t.value(combined_loss(t, forward(probe, t, t.leaf(img, false)).logits, label))[0];
      };
      ad::Tape t;
      const ForwardResult fwd = forward(m, t, t.leaf(img, false));
      const double a =
          collect_param_grads(ad::backward(t, combined_loss(t, fwd.logits, label)), fwd).at(name)[i];
      const double h = 1e-5;
      const double c = (loss_at(p[i] + h) - loss_at(p[i] - h)) / (2 * h);
      const double err = std::abs(a - c) / std::max(1e-12, std::abs(a) + std::abs(c));
      worst = std::max(worst, err);
      if (err >= 1e-6) fail(o, name + fmt(" err %.2e", err));
      ++coords;
    }
  }
  o.detail = fmt("%.0f primitive cases, %.0f unet weight coords, worst rel err %.2e",
                 static_cast<double>(ad::primitive_cases().size()), static_cast<double>(coords), worst) +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome lgs_exactness() {
  Outcome o;
  Rng rng(7);
  const std::size_t pools[] = {1, 2, 4, 8};
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t p = pools[rng.below(4)];
    const std::size_t h = 8 + p * rng.below((64 - 8) / p + 1), w = 8 + p * rng.below((64 - 8) / p + 1);
    const double eps = rng.uniform();
    const Tensor g = oracle::random_tensor(rng, {h, w});
    const Tensor got = lgs(g, eps, p);
    bool ok = got.vec() == oracle::lgs(g, eps, p).vec();
    for (std::size_t y = 0; y < h && ok; ++y)
      for (std::size_t x = 0; x < w && ok; ++x) {
        const double v = got.at(y, x);
        ok = (v == 0.0 || v == eps) && v == got.at(y - y % p, x - x % p);
      }
    bad += !ok;
  }
  if (bad) fail(o, fmt("%.0f of 1000 fields differ", static_cast<double>(bad)));
  else o.detail = "1000 fields bit-identical to the literal formula";
  return o;
}

// 3 and 4 -------------------------------------------------------------------

struct SeedRun {
  ExperimentConfig cfg;
  Datasets data;
  Model baseline;
  double pretrain_seconds = 0.0;
};

SeedRun prepare(std::uint64_t seed) {
  SeedRun r;
  r.cfg.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  r.data = make_dataset(dataset_spec(r.cfg));
  r.baseline = pretrain(r.cfg, r.data.train).model;
  r.pretrain_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Outcome hardness(const std::vector<SeedRun>& runs) {
  Outcome o;
  int monotone = 0;
  bool all_grow = true;
  for (const auto& r : runs) {
    Rng rng(sub_seed(r.cfg, SeedStream::kHardness));
    const HardnessCurve hc = hardness_curve(r.baseline, r.data.train, r.data.style_pool, r.cfg.curriculum,
                                            r.cfg.hardness_samples, rng);
    const auto& s = hc.stage_mean_loss;
    bool mono = true;
    for (std::size_t i = 1; i < s.size(); ++i) mono = mono && s[i] >= s[i - 1];
    monotone += mono;
    const double growth = s.back() / s.front() - 1.0;
    all_grow = all_grow && growth >= 0.10;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += fmt("seed %.0f: %.4f -> %.4f", static_cast<double>(r.cfg.seed), s.front(), s.back()) +
                fmt(" (%+.0f%%, ", 100.0 * growth) + (mono ? "monotone)" : "not monotone)");
  }
  o.pass = monotone >= 2 && all_grow;
  return o;
}

Outcome robustness(const std::vector<SeedRun>& runs) {
  Outcome o;
  double drop = 0.0, gain = 0.0;
  int ordered = 0;
  for (const auto& r : runs) {
    const AblationResult a = run_ablation(r.cfg, r.data, &r.baseline);
    const OrderingCheck c = check_ordering(a);
    drop += (a.seen_dsc_baseline - a.unseen_dsc_baseline) / runs.size();
    gain += (a.unseen_dsc.at("lscl") - a.unseen_dsc_baseline) / runs.size();
    ordered += c.ordering_holds;
    std::fprintf(stderr, "  seed %llu: seen %.4f unseen:", static_cast<unsigned long long>(r.cfg.seed),
                 a.seen_dsc_baseline);
    for (const auto& row : ablation_rows()) std::fprintf(stderr, " %s %.4f", row.c_str(), a.unseen_dsc.at(row));
    std::fprintf(stderr, "\n");
  }
  o.detail = fmt("drop %.4f, lscl gain %.4f, ordering in %.0f of 3 seeds", drop, gain, ordered);
  if (drop < 0.02) fail(o, "no seen/unseen drop");
  if (gain < 0.02) fail(o, "lscl gain below 0.02");
  if (ordered < 2) fail(o, "ordering fails");
  return o;
}

// 5 -------------------------------------------------------------------------

Outcome metric_oracles() {
  Outcome o;
  Rng rng(5);
  std::size_t bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 2 + rng.below(15), w = 2 + rng.below(15);
    const LabelMap a = oracle::random_mask(rng, h, w, 1, rng.uniform(0.0, 0.6));
    const LabelMap b = oracle::random_mask(rng, h, w, 1, rng.uniform(0.0, 0.6));
    const bool ok = dice_coefficient(a, b, 1) == oracle::dice(a, b, 1) &&
                    jaccard(a, b, 1) == oracle::jaccard(a, b, 1) &&
                    std::abs(hausdorff(a, b, 1) - oracle::hausdorff(a, b, 1)) < 1e-9 &&
                    std::abs(assd(a, b, 1) - oracle::assd(a, b, 1)) < 1e-9;
    bad += !ok;
  }
  if (bad) fail(o, fmt("%.0f of 200 mask pairs differ", static_cast<double>(bad)));
  else o.detail = "200 random mask pairs match the set-based oracle";
  return o;
}

// 6 -------------------------------------------------------------------------

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  c.seed = 3;
  c.data.train_per_vendor = 3;
  c.data.style_pool_size = 4;
  c.data.test_per_vendor = 2;
  c.model.base_channels = 4;
  c.pretrain_epochs = 1;
  c.finetune_epochs = 1;
  c.hardness_samples = 4;
  c.out_dir = out.string();
  return c;
}

std::map<std::string, std::string> run_all_commands(const fs::path& root) {
  fs::remove_all(root);
  const ExperimentConfig cfg = tiny_config(root);
  const OutputLayout out{root};
  cmd_gen_data(cfg, out);
  cmd_pretrain(cfg, out);
  for (const auto& m : finetune_methods()) cmd_finetune(cfg, out, m, m == "lscl" ? 4 : 0);
  std::vector<NamedCheckpoint> cks;
  for (const char* m : {"baseline", "random-style", "scl", "lscl", "mixup"}) cks.push_back({m, out.checkpoint(m)});
  cmd_evaluate(cfg, out, cks, true);
  cmd_hardness(cfg, out);
  cmd_ablate(cfg, out);
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
    files[fs::relative(e.path(), root).string()] = read_file_bytes(e.path());
  }
  fs::remove_all(root);
  return files;
}

Outcome invariants(const SeedRun& run) {
  Outcome o;
  const Dataset train{"train", {run.data.train.samples.begin(), run.data.train.samples.begin() + 8}};
  const Dataset& pool = run.data.style_pool;

  // Weight-map monotonicity, bound and convex hull.
  {
    Model m = run.baseline;
    OptState opt = OptState::sgd_momentum(1e-3);
    Rng rng(1);
    FinetuneOptions fo;
    fo.keep_snapshots = true;
    const CurriculumParams p;
    const TrainLog log = curriculum_finetune(m, train, pool, p, opt, 1, rng, fo);
    bool mono = true, bound = true, hull = true;
    const std::size_t stages = static_cast<std::size_t>(p.n) + 1;
    for (std::size_t k = 0; k < log.snapshots.size(); ++k) {
      const StageSnapshot& s = log.snapshots[k];
      const std::size_t i = k % stages;
      for (std::size_t j = 0; j < s.gamma.size(); ++j) {
        bound = bound && s.gamma[j] >= 0.0 && s.gamma[j] <= std::min(1.0, static_cast<double>(i) * p.epsilon);
        if (i > 0) mono = mono && s.gamma[j] >= log.snapshots[k - 1].gamma[j];
        hull = hull && s.z_i[j] >= std::min(s.z[j], s.x_c[j]) - 1e-15 && s.z_i[j] <= std::max(s.z[j], s.x_c[j]) + 1e-15;
      }
    }
    if (!mono) fail(o, "weight map not monotone");
    if (!bound) fail(o, "weight map exceeds min(1, i*eps)");
    if (!hull) fail(o, "stage sample outside the content/style hull");
  }

  // Zero step size trains on the content image only.
  {
    CurriculumParams p;
    p.epsilon = 0.0;
    Model a = run.baseline, b = run.baseline;
    OptState oa = OptState::sgd_momentum(1e-3), ob = OptState::sgd_momentum(1e-3);
    Rng ra(2), rb(2);
    lscl_finetune(a, train, pool, p, oa, 1, ra);
    for (std::size_t idx : epoch_order(rb, train.size())) {
      rb.below(pool.size());
      for (int stage = 0; stage <= p.n; ++stage) {
        const StepResult s = loss_and_grads(b, train.samples[idx].image, train.samples[idx].label);
        sgd_momentum_step(b.params, s.param_grads, ob);
      }
    }
    if (a.params != b.params) fail(o, "eps=0 run differs from content-only training");
  }

  // TTA equivariance.
  {
    const Tensor& x = run.data.test[2].samples[0].image;
    double worst = 0.0;
    for (int k = 1; k < 4; ++k) {
      const Tensor lhs = tta_predict(run.baseline, rot90(x, k));
      const Tensor rhs = rot90(tta_predict(run.baseline, x), k);
      for (std::size_t i = 0; i < lhs.size(); ++i) worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
    }
    if (worst > 1e-12) fail(o, fmt("tta equivariance err %.2e", worst));
  }

  // Checkpoint round trip.
  {
    const fs::path path = fs::temp_directory_path() / "lscl_acceptance.ckpt";
    const OptState opt = OptState::adam(1e-3);
    save_checkpoint(run.baseline, &opt, path);
    const std::string bytes = read_file_bytes(path);
    const Checkpoint back = load_checkpoint(path);
    save_checkpoint(back.model, back.opt ? &*back.opt : nullptr, path);
    if (back.model.params != run.baseline.params || read_file_bytes(path) != bytes) {
      fail(o, "checkpoint round trip not bit-exact");
    }
    fs::remove(path);
  }

  // Every command twice from scratch.
  {
    const auto a = run_all_commands(fs::temp_directory_path() / "lscl_acceptance_a");
    const auto b = run_all_commands(fs::temp_directory_path() / "lscl_acceptance_a");
    if (a != b || a.empty()) fail(o, "command outputs differ between identical runs");
    else o.detail = fmt("%.0f output files byte-identical across runs", static_cast<double>(a.size()));
  }
  return o;
}

}  // namespace

int main() {
  std::vector<Outcome> results(6);
  std::fprintf(stderr, "criteria 1, 2, 5\n");
  results[0] = timed(gradients);
  results[1] = timed(lgs_exactness);
  results[4] = timed(metric_oracles);

  std::vector<SeedRun> runs;
  double pretrain_seconds = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    std::fprintf(stderr, "pretraining seed %llu\n", static_cast<unsigned long long>(seed));
    runs.push_back(prepare(seed));
    pretrain_seconds += runs.back().pretrain_seconds;
  }
  std::fprintf(stderr, "criterion 3\n");
  results[2] = timed([&] { return hardness(runs); });
  std::fprintf(stderr, "criterion 4\n");
  results[3] = timed([&] { return robustness(runs); });
  std::fprintf(stderr, "criterion 6\n");
  results[5] = timed([&] { return invariants(runs.front()); });

  const char* names[] = {"gradient correctness", "LGS exactness", "curriculum hardness",
                         "robustness trend", "metric oracles", "invariant suite"};
  const double limits[] = {60, 10, 120, 1800, 10, 300};
  bool all = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    Outcome& r = results[i];
    if (i == 3) r.seconds += pretrain_seconds;  // the whole pipeline counts here
    if (r.seconds > limits[i]) fail(r, fmt("took %.1f s, limit %.0f s", r.seconds, limits[i]));
    all = all && r.pass;
    std::printf("%s %zu %s (%.1f s): %s\n", r.pass ? "PASS" : "FAIL", i + 1, names[i], r.seconds, r.detail.c_str());
  }
  std::printf("shared baseline pretraining for 3 and 4: %.1f s over 3 seeds\n", pretrain_seconds);
  return all ? 0 : 1;
}

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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lscl/autodiff.hpp"
#include "lscl/error.hpp"
#include "lscl/losses.hpp"
#include "lscl/metrics.hpp"
#include "lscl/stylegen.hpp"
#include "lscl/tensor.hpp"
#include "lscl/unet.hpp"

namespace lscl {

struct CurriculumParams {
  int n = 3;               // last stage index; stages run 0..n inclusive
  double epsilon = 0.25;   // learning step of the weight map
  std::size_t pool_size = 4;
  bool clamp_gamma = true;

  void validate(std::size_t h, std::size_t w) const {
    if (n < 0) throw InvalidArgument("curriculum n must be >= 0");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("curriculum epsilon must lie in [0, 1]");
    if (pool_size == 0 || h % pool_size || w % pool_size) {
      throw InvalidArgument("pool size " + std::to_string(pool_size) + " must divide " +
                            std::to_string(h) + "x" + std::to_string(w));
    }
  }
};

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Local gradient sign: average-pool the gradient over pool x pool blocks,
// take the sign, scale by epsilon, drop negatives, and expand each block back
// to full size. Output entries are 0 or epsilon, constant per block.
inline Tensor lgs(const Tensor& grad, double epsilon, std::size_t pool_size) {
  if (grad.rank() != 2) throw ShapeError("lgs expects an h x w gradient, got " + shape_str(grad.shape()));
  const std::size_t h = grad.dim(0), w = grad.dim(1);
  if (pool_size == 0 || h % pool_size || w % pool_size) {
    throw ShapeError("lgs: pool size " + std::to_string(pool_size) + " does not divide " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t bh = h / pool_size, bw = w / pool_size;
  const double area = static_cast<double>(pool_size * pool_size);
  Tensor out({h, w});
  for (std::size_t by = 0; by < bh; ++by)
    for (std::size_t bx = 0; bx < bw; ++bx) {
      double sum = 0.0;
      for (std::size_t y = by * pool_size; y < (by + 1) * pool_size; ++y)
        for (std::size_t x = bx * pool_size; x < (bx + 1) * pool_size; ++x) sum += grad.at(y, x);
      const double step = std::max(0.0, epsilon * sign_of(sum / area));
      for (std::size_t y = by * pool_size; y < (by + 1) * pool_size; ++y)
        for (std::size_t x = bx * pool_size; x < (bx + 1) * pool_size; ++x) out.at(y, x) = step;
    }
  return out;
}

// Per-pixel variant without pooling (the SCL ablation).
inline Tensor scl_increment(const Tensor& grad, double epsilon) {
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = std::max(0.0, epsilon * sign_of(grad[i]));
  return out;
}

namespace curriculum_detail {

inline std::size_t plane_size(const Tensor& img) {
  return img.dim(img.rank() - 2) * img.dim(img.rank() - 1);
}

}  // namespace curriculum_detail

// z_i = gamma * z + (1 - gamma) * x_c, pixelwise. gamma is h x w; images are
// 1 x h x w.
inline Tensor blend(const Tensor& gamma, const Tensor& z, const Tensor& x_c) {
  if (z.shape() != x_c.shape()) {
    throw ShapeError("blend: stylised " + shape_str(z.shape()) + " vs content " +
                     shape_str(x_c.shape()));
  }
  if (gamma.size() != curriculum_detail::plane_size(x_c) || z.size() != gamma.size()) {
    throw ShapeError("blend: weight map " + shape_str(gamma.shape()) + " does not match image " +
                     shape_str(x_c.shape()));
  }
  Tensor out(x_c.shape());
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const double g = gamma[i];
    if (!(g >= 0.0 && g <= 1.0)) {
      throw InvalidArgument("blend: weight " + std::to_string(g) + " outside [0, 1]");
    }
    out[i] = g * z[i] + (1.0 - g) * x_c[i];
  }
  return out;
}

// x' = x + epsilon * sign(grad), clamped to [0, 1] unless `clamp` is false.
inline Tensor fgsm_perturb(const Tensor& x, const Tensor& grad, double epsilon, bool clamp = true) {
  if (x.size() != grad.size()) {
    throw ShapeError("fgsm_perturb: image " + shape_str(x.shape()) + " vs gradient " +
                     shape_str(grad.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] + epsilon * sign_of(grad[i]);
    out[i] = clamp ? std::clamp(v, 0.0, 1.0) : v;
  }
  return out;
}

struct MixedSample {
  Tensor image;       // 1 x h x w
  Tensor soft_label;  // c x h x w
};

// Mixup: lambda * (x1, onehot(y1)) + (1 - lambda) * (x2, onehot(y2)).
inline MixedSample mixup(const Sample& s1, const Sample& s2, double lambda,
                         int num_classes = kNumClasses) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("mixup: lambda outside [0, 1]");
  if (s1.image.shape() != s2.image.shape() || s1.label.height != s2.label.height ||
      s1.label.width != s2.label.width) {
    throw ShapeError("mixup: samples differ in shape");
  }
  MixedSample m;
  m.image = Tensor(s1.image.shape());
  for (std::size_t i = 0; i < m.image.size(); ++i) {
    m.image[i] = lambda * s1.image[i] + (1.0 - lambda) * s2.image[i];
  }
  const Tensor a = one_hot({&s1.label}, num_classes);
  const Tensor b = one_hot({&s2.label}, num_classes);
  m.soft_label = Tensor({static_cast<std::size_t>(num_classes), s1.label.height, s1.label.width});
  for (std::size_t i = 0; i < a.size(); ++i) m.soft_label[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  return m;
}

// ---------------------------------------------------------------------------
// Loss and gradients for one image

struct StepResult {
  double loss = 0.0;
  Tensor input_grad;  // h x w, averaged over input channels
  ParamMap param_grads;
};

inline Tensor as_batch(const Tensor& image) {
  if (image.rank() == 4) return image;
  if (image.rank() != 3) throw ShapeError("expected a c x h x w image, got " + shape_str(image.shape()));
  return image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
}

inline Tensor channel_mean(const Tensor& grad4) {
  const std::size_t c = grad4.dim(1), h = grad4.dim(2), w = grad4.dim(3);
  Tensor out({h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < h * w; ++p) out[p] += grad4[ch * h * w + p];
  for (double& v : out.data()) v /= static_cast<double>(c);
  return out;
}

// Combined loss of one labelled image with gradients w.r.t. the input and,
// when `param_grads` is set, the parameters.
inline StepResult loss_and_grads(const Model& model, const Tensor& image, const LabelMap& label,
                                 bool param_grads = true) {
  ad::Tape tape;
  const ad::NodeId in = tape.leaf(as_batch(image), true);
  const ForwardResult fwd = forward(model, tape, in, param_grads);
  const ad::NodeId loss = combined_loss(tape, fwd.logits, label);
  const ad::Gradients g = ad::backward(tape, loss);
  StepResult r;
  r.loss = tape.value(loss)[0];
  r.input_grad = channel_mean(g.at(in));
  if (param_grads) r.param_grads = collect_param_grads(g, fwd);
  return r;
}

inline double image_loss(const Model& model, const Tensor& image, const LabelMap& label) {
  ad::Tape tape;
  const ad::NodeId in = tape.leaf(as_batch(image), false);
  const ForwardResult fwd = forward(model, tape, in, false);
  return tape.value(combined_loss(tape, fwd.logits, label))[0];
}

// ---------------------------------------------------------------------------
// Curriculum finetuning

struct TrainLogRow {
  int epoch = 0;
  std::size_t sample_idx = 0;
  int stage = 0;
  double loss = 0.0;
  double mean_abs_delta_z = 0.0;
  double gamma_mean = 0.0;

  friend bool operator==(const TrainLogRow&, const TrainLogRow&) = default;
};

struct StageSnapshot {
  Tensor gamma;  // weight map used at this stage
  Tensor z_i;    // curriculum sample fed to the model
  Tensor z;      // fully stylised base image
  Tensor x_c;    // content image
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::vector<StageSnapshot> snapshots;  // filled when requested
};

inline void write_trainlog_csv(std::ostream& os, const TrainLog& log) {
  os << "epoch,sample_idx,stage,loss,mean_abs_delta_z,gamma_mean\n";
  for (const auto& r : log.rows) {
    os << r.epoch << ',' << r.sample_idx << ',' << r.stage << ',' << format_fixed(r.loss, 9) << ','
       << format_fixed(r.mean_abs_delta_z, 9) << ',' << format_fixed(r.gamma_mean, 9) << '\n';
  }
}

enum class IncrementRule { kLocalGradientSign, kPixelSign };

struct FinetuneOptions {
  IncrementRule rule = IncrementRule::kLocalGradientSign;
  double initial_gamma = 0.0;  // 1.0 trains on the fully stylised image
  bool update_params = true;   // false gives the frozen-model diagnostic
  bool keep_snapshots = false;
  std::size_t snapshot_limit = 0;  // max snapshots kept; 0 = no limit
  std::size_t max_samples = 0;  // 0 = whole training set per epoch
  bool rotate = false;  // random quarter turn of each content sample
};

// Sample visiting order for one epoch (Fisher-Yates with the run's rng).
inline std::vector<std::size_t> epoch_order(Rng& rng, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

namespace curriculum_detail {

inline double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace curriculum_detail

// Curriculum loop. Per epoch the training set is visited in a shuffled order;
// for every content sample one style image is drawn from the pool, then
// stages i = 0..n each blend, evaluate the loss, grow the weight map from the
// input gradient and (optionally) take one optimizer step.
inline TrainLog curriculum_finetune(Model& model, const Dataset& train, const Dataset& style_pool,
                                    const CurriculumParams& params, OptState& opt, int epochs,
                                    Rng& rng, const FinetuneOptions& options = {}) {
  if (train.empty()) throw InvalidArgument("finetune: empty training set");
  if (style_pool.empty()) throw InvalidArgument("finetune: empty style pool");
  const std::size_t h = train.samples[0].label.height, w = train.samples[0].label.width;
  params.validate(h, w);
  if (!(options.initial_gamma >= 0.0 && options.initial_gamma <= 1.0)) {
    throw InvalidArgument("finetune: initial weight must lie in [0, 1]");
  }

  TrainLog log;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order = epoch_order(rng, train.size());
    if (options.max_samples && options.max_samples < order.size()) order.resize(options.max_samples);
    for (std::size_t idx : order) {
      const Sample& style = style_pool.samples[rng.below(style_pool.size())];
      const Sample content =
          options.rotate ? rot90(train.samples[idx], static_cast<int>(rng.below(4))) : train.samples[idx];
      const Tensor z = moment_style_transfer(content.image, style.image);
      Tensor gamma({h, w}, options.initial_gamma);
      for (int stage = 0; stage <= params.n; ++stage) {
        const Tensor z_i = blend(gamma, z, content.image);
        StepResult step;
        try {
          step = loss_and_grads(model, z_i, content.label, options.update_params);
        } catch (const NumericError& err) {
          throw NumericError(std::string(err.what()) + " (epoch " + std::to_string(epoch) +
                             ", sample " + std::to_string(idx) + ", stage " +
                             std::to_string(stage) + ")");
        }

        Tensor inc = options.rule == IncrementRule::kLocalGradientSign
                         ? lgs(step.input_grad, params.epsilon, params.pool_size)
                         : scl_increment(step.input_grad, params.epsilon);
        Tensor next = gamma;
        for (std::size_t i = 0; i < next.size(); ++i) {
          next[i] += inc[i];
          if (params.clamp_gamma) next[i] = std::clamp(next[i], 0.0, 1.0);
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.sample_idx = idx;
        row.stage = stage;
        row.loss = step.loss;
        row.gamma_mean = gamma.mean();
        if (params.clamp_gamma || std::all_of(next.data().begin(), next.data().end(),
                                              [](double g) { return g >= 0.0 && g <= 1.0; })) {
          row.mean_abs_delta_z = curriculum_detail::mean_abs_diff(blend(next, z, content.image), z_i);
        }
        log.rows.push_back(row);
        if (options.keep_snapshots &&
            (options.snapshot_limit == 0 || log.snapshots.size() < options.snapshot_limit)) {
          log.snapshots.push_back({gamma, z_i, z, content.image});
        }

        if (options.update_params) optimizer_step(model.params, step.param_grads, opt);
        gamma = std::move(next);
      }
    }
  }
  return log;
}

// LSCL: weight map grown by the local gradient sign from zero.
inline TrainLog lscl_finetune(Model& model, const Dataset& train, const Dataset& style_pool,
                              const CurriculumParams& params, OptState& opt, int epochs, Rng& rng) {
  return curriculum_finetune(model, train, style_pool, params, opt, epochs, rng, {});
}

// SCL ablation: per-pixel gradient sign, no pooling.
inline TrainLog scl_finetune(Model& model, const Dataset& train, const Dataset& style_pool,
                             const CurriculumParams& params, OptState& opt, int epochs, Rng& rng) {
  FinetuneOptions o;
  o.rule = IncrementRule::kPixelSign;
  return curriculum_finetune(model, train, style_pool, params, opt, epochs, rng, o);
}

// Training directly on randomly stylised samples: one stage with the weight
// map fixed at one.
inline TrainLog random_style_finetune(Model& model, const Dataset& train,
                                      const Dataset& style_pool, OptState& opt, int epochs,
                                      Rng& rng, std::size_t pool_size = 4) {
  CurriculumParams p;
  p.n = 0;
  p.pool_size = pool_size;
  FinetuneOptions o;
  o.initial_gamma = 1.0;
  return curriculum_finetune(model, train, style_pool, p, opt, epochs, rng, o);
}

// Mixup baseline; lambda ~ Beta(alpha, alpha), partner drawn uniformly.
inline TrainLog mixup_finetune(Model& model, const Dataset& train, OptState& opt, int epochs,
                               Rng& rng, double alpha = 0.2, bool rotate = false) {
  if (train.empty()) throw InvalidArgument("finetune: empty training set");
  TrainLog log;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t idx : epoch_order(rng, train.size())) {
      const Sample& partner = train.samples[rng.below(train.size())];
      const double lambda = rng.beta(alpha, alpha);
      MixedSample m = mixup(train.samples[idx], partner, lambda, model.config.num_classes);
      if (rotate) {
        const int k = static_cast<int>(rng.below(4));
        m.image = rot90(m.image, k);
        m.soft_label = rot90(m.soft_label, k);
      }
      ad::Tape tape;
      const ad::NodeId in = tape.leaf(as_batch(m.image), false);
      const ForwardResult fwd = forward(model, tape, in);
      const Tensor target = m.soft_label.reshaped(
          {1, m.soft_label.dim(0), m.soft_label.dim(1), m.soft_label.dim(2)});
      const ad::NodeId loss = soft_combined_loss(tape, fwd.logits, target);
      const ad::Gradients g = ad::backward(tape, loss);
      log.rows.push_back({epoch, idx, 0, tape.value(loss)[0], 0.0, 0.0});
      optimizer_step(model.params, collect_param_grads(g, fwd), opt);
    }
  }
  return log;
}

// Frozen-model hardness curve: mean loss per stage over `count` training
// samples, each paired with one random style image.
struct HardnessCurve {
  std::vector<double> stage_mean_loss;
  std::vector<std::vector<double>> per_sample;  // [sample][stage]
};

inline HardnessCurve hardness_curve(const Model& model, const Dataset& train,
                                    const Dataset& style_pool, const CurriculumParams& params,
                                    std::size_t count, Rng& rng) {
  Model frozen = model;
  OptState unused;
  FinetuneOptions o;
  o.update_params = false;
  o.max_samples = count;
  const TrainLog log = curriculum_finetune(frozen, train, style_pool, params, unused, 1, rng, o);
  HardnessCurve hc;
  const std::size_t stages = static_cast<std::size_t>(params.n) + 1;
  hc.stage_mean_loss.assign(stages, 0.0);
  for (std::size_t i = 0; i < log.rows.size(); i += stages) {
    std::vector<double> losses;
    for (std::size_t s = 0; s < stages; ++s) {
      losses.push_back(log.rows[i + s].loss);
      hc.stage_mean_loss[s] += log.rows[i + s].loss;
    }
    hc.per_sample.push_back(std::move(losses));
  }
  for (double& v : hc.stage_mean_loss) v /= static_cast<double>(hc.per_sample.size());
  return hc;
}

}  // namespace lscl

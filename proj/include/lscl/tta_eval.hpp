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

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lscl/autodiff.hpp"
#include "lscl/curriculum.hpp"
#include "lscl/error.hpp"
#include "lscl/label_map.hpp"
#include "lscl/metrics.hpp"
#include "lscl/stylegen.hpp"
#include "lscl/unet.hpp"

namespace lscl {

// Single-pass class probabilities, c x h x w.
inline Tensor predict_probs(const Model& model, const Tensor& image) {
  ad::Tape tape;
  const ad::NodeId in = tape.leaf(as_batch(image), false);
  const ForwardResult fwd = forward(model, tape, in, false);
  const Tensor& p = tape.value(ad::softmax(tape, fwd.logits));
  return p.reshaped({p.dim(1), p.dim(2), p.dim(3)});
}

// Probabilities averaged over the identity and the 90/180/270 degree
// rotations, each mapped back to the original orientation. Terms are summed
// in rotation order.
inline Tensor tta_predict(const Model& model, const Tensor& image) {
  const Tensor batch = as_batch(image);
  if (batch.dim(2) != batch.dim(3)) {
    throw ShapeError("tta_predict needs a square image, got " + shape_str(image.shape()));
  }
  Tensor acc;
  for (int k = 0; k < 4; ++k) {
    Tensor p = rot90(predict_probs(model, rot90(batch, k)), -k);
    if (k == 0) {
      acc = std::move(p);
    } else {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
  }
  for (double& v : acc.data()) v *= 0.25;
  return acc;
}

struct ImageMetrics {
  // [structure index 0..2 for LV, MYO, RV][metric index DSC, JAC, HD, ASSD]
  double values[3][4] = {};
};

inline ImageMetrics image_metrics(const LabelMap& pred, const LabelMap& gt) {
  ImageMetrics m;
  for (int s = 0; s < 3; ++s) {
    const int cls = s + 1;
    m.values[s][0] = dice_coefficient(pred, gt, cls);
    m.values[s][1] = jaccard(pred, gt, cls);
    m.values[s][2] = hausdorff(pred, gt, cls);
    m.values[s][3] = assd(pred, gt, cls);
  }
  return m;
}

namespace eval_detail {

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace eval_detail

// Predictor used by evaluate(); defaults to argmax of the model output.
using Predictor = std::function<LabelMap(const Sample&)>;

inline Predictor model_predictor(const Model& model, bool use_tta) {
  return [&model, use_tta](const Sample& s) {
    return argmax_labels(use_tta ? tta_predict(model, s.image) : predict_probs(model, s.image));
  };
}

// Per-vendor mean and std (over images) of every metric for LV, MYO, RV and
// their per-image average (AVG). Vendors appear in first-seen order.
inline MetricTable evaluate_predictor(const Predictor& predict, const std::vector<Dataset>& test,
                                      const std::string& method) {
  std::vector<std::string> vendors;
  std::map<std::string, std::vector<ImageMetrics>> per_vendor;
  for (const Dataset& ds : test) {
    for (const Sample& s : ds.samples) {
      if (!per_vendor.count(s.vendor)) vendors.push_back(s.vendor);
      per_vendor[s.vendor].push_back(image_metrics(predict(s), s.label));
    }
  }
  if (vendors.empty()) throw InvalidArgument("evaluate: empty test set");

  MetricTable table;
  const auto& metrics = metric_names();
  const auto& structures = structure_names();
  for (const auto& v : vendors) {
    const auto& rows = per_vendor[v];
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t m = 0; m < 4; ++m) {
        std::vector<double> vals;
        for (const auto& r : rows) {
          vals.push_back(s < 3 ? r.values[s][m]
                               : (r.values[0][m] + r.values[1][m] + r.values[2][m]) / 3.0);
        }
        MetricCell cell{method, v, structures[s], metrics[m]};
        eval_detail::mean_std(vals, cell.mean, cell.std);
        table.cells.push_back(cell);
      }
    }
  }
  return table;
}

inline MetricTable evaluate(const Model& model, const std::vector<Dataset>& test, bool use_tta,
                            const std::string& method) {
  return evaluate_predictor(model_predictor(model, use_tta), test, method);
}

inline MetricTable evaluate(const Model& model, const Dataset& test, bool use_tta,
                            const std::string& method) {
  return evaluate(model, std::vector<Dataset>{test}, use_tta, method);
}

struct EvalReport {
  MetricTable table;
  std::vector<MethodScore> scores;
  std::string fingerprint;
  double wall_clock_seconds = 0.0;
};

// Merges per-method tables (which must cover the same vendors) and ranks them.
inline EvalReport compare_report(const std::vector<MetricTable>& tables,
                                 const std::string& fingerprint = "",
                                 double wall_clock_seconds = 0.0) {
  if (tables.size() < 2) throw InvalidArgument("compare_report needs at least 2 method tables");
  EvalReport rep;
  const auto vendors = tables.front().vendors();
  for (const auto& t : tables) {
    if (t.vendors() != vendors) {
      throw InvalidArgument("compare_report: method tables cover different vendors");
    }
    rep.table.append(t);
  }
  rep.scores = minmax_score(rep.table);
  rep.fingerprint = fingerprint;
  rep.wall_clock_seconds = wall_clock_seconds;
  return rep;
}

// metrics.csv and summary.csv; both are byte-deterministic.
inline void write_report_csvs(const EvalReport& rep, const std::filesystem::path& dir) {
  std::ostringstream cells;
  write_cells_csv(cells, rep.table);
  write_text_file(dir / "metrics.csv", cells.str());
  std::ostringstream summary;
  write_summary_csv(summary, rep.table, rep.scores);
  write_text_file(dir / "summary.csv", summary.str());
}

}  // namespace lscl

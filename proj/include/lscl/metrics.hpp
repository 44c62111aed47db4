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
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "lscl/error.hpp"
#include "lscl/label_map.hpp"

namespace lscl {

namespace metric_detail {

struct Counts {
  std::size_t a = 0, b = 0, both = 0;
};

inline Counts overlap(const LabelMap& pred, const LabelMap& gt, int class_id) {
  Counts c;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool in_a = pred.data[i] == class_id;
    const bool in_b = gt.data[i] == class_id;
    c.a += in_a;
    c.b += in_b;
    c.both += in_a && in_b;
  }
  return c;
}

inline std::vector<bool> mask_of(const LabelMap& m, int class_id) {
  std::vector<bool> out(m.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.data[i] == class_id;
  return out;
}

// Class pixels with at least one 4-neighbour outside the class; the image
// border counts as outside.
inline std::vector<bool> boundary_of(const std::vector<bool>& mask, std::size_t h, std::size_t w) {
  std::vector<bool> out(mask.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || !mask[(y - 1) * w + x] ||
                        !mask[(y + 1) * w + x] || !mask[y * w + x - 1] || !mask[y * w + x + 1];
      out[y * w + x] = edge;
    }
  return out;
}

// Exact 1-D squared distance transform (lower envelope of parabolas).
inline void edt_1d(const double* f, std::size_t n, double* d, std::vector<std::size_t>& v,
                   std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] < kInf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    std::fill(d, d + n, kInf);
    return;
  }
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (!(f[q] < kInf)) continue;
    const double qd = static_cast<double>(q);
    for (;;) {
      const double vd = static_cast<double>(v[k]);
      const double s = ((f[q] + qd * qd) - (f[v[k]] + vd * vd)) / (2.0 * qd - 2.0 * vd);
      if (s <= z[k]) {
        if (k == 0) {
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest set pixel.
inline std::vector<double> squared_edt(const std::vector<bool>& mask, std::size_t h,
                                       std::size_t w) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(h * w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = mask[i] ? 0.0 : kInf;
  std::vector<std::size_t> v;
  std::vector<double> z;
  std::vector<double> col(h), out_col(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) col[y] = grid[y * w + x];
    edt_1d(col.data(), h, out_col.data(), v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = out_col[y];
  }
  std::vector<double> row(w);
  for (std::size_t y = 0; y < h; ++y) {
    edt_1d(grid.data() + y * w, w, row.data(), v, z);
    std::copy(row.begin(), row.end(), grid.begin() + static_cast<long>(y * w));
  }
  return grid;
}

inline double diagonal(const LabelMap& m) {
  return std::sqrt(static_cast<double>(m.height * m.height + m.width * m.width));
}

}  // namespace metric_detail

// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
inline double dice_coefficient(const LabelMap& pred, const LabelMap& gt, int class_id) {
  require_same_shape(pred, gt, "dice_coefficient");
  const auto c = metric_detail::overlap(pred, gt, class_id);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

inline double jaccard(const LabelMap& pred, const LabelMap& gt, int class_id) {
  require_same_shape(pred, gt, "jaccard");
  const auto c = metric_detail::overlap(pred, gt, class_id);
  const std::size_t uni = c.a + c.b - c.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.both) / static_cast<double>(uni);
}

// Symmetric Hausdorff distance in pixels over all class pixels.
// Both empty -> 0, exactly one empty -> image diagonal.
inline double hausdorff(const LabelMap& pred, const LabelMap& gt, int class_id) {
  require_same_shape(pred, gt, "hausdorff");
  const auto a = metric_detail::mask_of(pred, class_id);
  const auto b = metric_detail::mask_of(gt, class_id);
  const bool a_empty = std::none_of(a.begin(), a.end(), [](bool v) { return v; });
  const bool b_empty = std::none_of(b.begin(), b.end(), [](bool v) { return v; });
  if (a_empty && b_empty) return 0.0;
  if (a_empty || b_empty) return metric_detail::diagonal(pred);
  const auto da = metric_detail::squared_edt(a, pred.height, pred.width);
  const auto db = metric_detail::squared_edt(b, pred.height, pred.width);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) worst = std::max(worst, db[i]);
    if (b[i]) worst = std::max(worst, da[i]);
  }
  return std::sqrt(worst);
}

// Average symmetric surface distance in pixels between class boundaries.
inline double assd(const LabelMap& pred, const LabelMap& gt, int class_id) {
  require_same_shape(pred, gt, "assd");
  const std::size_t h = pred.height, w = pred.width;
  const auto ba = metric_detail::boundary_of(metric_detail::mask_of(pred, class_id), h, w);
  const auto bb = metric_detail::boundary_of(metric_detail::mask_of(gt, class_id), h, w);
  const std::size_t na = static_cast<std::size_t>(std::count(ba.begin(), ba.end(), true));
  const std::size_t nb = static_cast<std::size_t>(std::count(bb.begin(), bb.end(), true));
  if (na == 0 && nb == 0) return 0.0;
  if (na == 0 || nb == 0) return metric_detail::diagonal(pred);
  const auto da = metric_detail::squared_edt(ba, h, w);
  const auto db = metric_detail::squared_edt(bb, h, w);
  double sum_a = 0.0;
  double sum_b = 0.0;
  for (std::size_t i = 0; i < ba.size(); ++i) {
    if (ba[i]) sum_a += std::sqrt(db[i]);
    if (bb[i]) sum_b += std::sqrt(da[i]);
  }
  return (sum_a + sum_b) / static_cast<double>(na + nb);
}

// ---------------------------------------------------------------------------
// Metric tables and ranking

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"DSC", "JAC", "HD", "ASSD"};
  return names;
}

inline const std::vector<std::string>& structure_names() {
  static const std::vector<std::string> names = {"LV", "MYO", "RV", "AVG"};
  return names;
}

struct MetricCell {
  std::string method;
  std::string vendor;
  std::string structure;  // LV, MYO, RV or AVG
  std::string metric;     // DSC, JAC, HD or ASSD
  double mean = 0.0;
  double std = 0.0;
};

struct MetricTable {
  std::vector<MetricCell> cells;

  const MetricCell* find(const std::string& method, const std::string& vendor,
                         const std::string& structure, const std::string& metric) const {
    for (const auto& c : cells) {
      if (c.method == method && c.vendor == vendor && c.structure == structure &&
          c.metric == metric) {
        return &c;
      }
    }
    return nullptr;
  }

  double mean(const std::string& method, const std::string& vendor, const std::string& metric,
              const std::string& structure = "AVG") const {
    const MetricCell* c = find(method, vendor, structure, metric);
    if (!c) {
      throw InvalidArgument("metric table has no cell " + method + "/" + vendor + "/" +
                            structure + "/" + metric);
    }
    return c->mean;
  }

  // Distinct values in first-appearance order.
  std::vector<std::string> methods() const { return distinct(&MetricCell::method); }
  std::vector<std::string> vendors() const { return distinct(&MetricCell::vendor); }

  void append(const MetricTable& other) {
    cells.insert(cells.end(), other.cells.begin(), other.cells.end());
  }

 private:
  std::vector<std::string> distinct(std::string MetricCell::*field) const {
    std::vector<std::string> out;
    for (const auto& c : cells) {
      if (std::find(out.begin(), out.end(), c.*field) == out.end()) out.push_back(c.*field);
    }
    return out;
  }
};

struct MethodScore {
  std::string method;
  double dsc_score = 0.0;
  double hd_score = 0.0;
  double minmax = 0.0;
};

// DSC/HD scores are unweighted vendor means of the structure-averaged cells.
// Each (vendor, DSC|HD) cell is min-max normalized across methods (higher is
// better for both after flipping HD); degenerate cells contribute 0. The
// Min-max score is the mean of a method's normalized cells.
inline std::vector<MethodScore> minmax_score(const MetricTable& table) {
  const auto methods = table.methods();
  const auto vendors = table.vendors();
  if (methods.size() < 2) throw InvalidArgument("minmax_score needs at least 2 methods");

  std::vector<MethodScore> scores;
  for (const auto& m : methods) {
    MethodScore s{m};
    for (const auto& v : vendors) {
      s.dsc_score += table.mean(m, v, "DSC");
      s.hd_score += table.mean(m, v, "HD");
    }
    s.dsc_score /= static_cast<double>(vendors.size());
    s.hd_score /= static_cast<double>(vendors.size());
    scores.push_back(s);
  }

  std::size_t cells = 0;
  for (const auto& v : vendors) {
    for (const std::string metric : {"DSC", "HD"}) {
      std::vector<double> vals;
      for (const auto& m : methods) vals.push_back(table.mean(m, v, metric));
      const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
      const double range = *hi - *lo;
      for (std::size_t i = 0; i < methods.size(); ++i) {
        double norm = 0.0;
        if (range > 0.0) norm = metric == "DSC" ? (vals[i] - *lo) / range : (*hi - vals[i]) / range;
        scores[i].minmax += norm;
      }
      ++cells;
    }
  }
  for (auto& s : scores) s.minmax /= static_cast<double>(cells);
  return scores;
}

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// method,vendor,structure,metric,mean,std
inline void write_cells_csv(std::ostream& os, const MetricTable& table) {
  os << "method,vendor,structure,metric,mean,std\n";
  for (const auto& c : table.cells) {
    os << c.method << ',' << c.vendor << ',' << c.structure << ',' << c.metric << ','
       << format_fixed(c.mean) << ',' << format_fixed(c.std) << '\n';
  }
}

// One row per method: per-vendor DSC and HD, then DSC Score, HD Score and
// Min-max Score.
inline void write_summary_csv(std::ostream& os, const MetricTable& table,
                              const std::vector<MethodScore>& scores) {
  const auto vendors = table.vendors();
  os << "method";
  for (const auto& v : vendors) os << ',' << v << "_DSC," << v << "_HD";
  os << ",DSC_Score,HD_Score,MinMax_Score\n";
  for (const auto& s : scores) {
    os << s.method;
    for (const auto& v : vendors) {
      os << ',' << format_fixed(table.mean(s.method, v, "DSC")) << ','
         << format_fixed(table.mean(s.method, v, "HD"));
    }
    os << ',' << format_fixed(s.dsc_score) << ',' << format_fixed(s.hd_score) << ','
       << format_fixed(s.minmax) << '\n';
  }
}

}  // namespace lscl

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

// Independent brute-force reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "lscl/label_map.hpp"
#include "lscl/tensor.hpp"

namespace lscl::oracle {

using Point = std::pair<long, long>;  // (row, col)

inline std::set<Point> points_of(const LabelMap& m, int cls) {
  std::set<Point> s;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.at(y, x) == cls) s.insert({static_cast<long>(y), static_cast<long>(x)});
  return s;
}

inline double dice(const LabelMap& a, const LabelMap& b, int cls) {
  const auto pa = points_of(a, cls), pb = points_of(b, cls);
  if (pa.empty() && pb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& p : pa) inter += pb.count(p);
  return 2.0 * static_cast<double>(inter) / static_cast<double>(pa.size() + pb.size());
}

inline double jaccard(const LabelMap& a, const LabelMap& b, int cls) {
  const auto pa = points_of(a, cls), pb = points_of(b, cls);
  std::set<Point> uni = pa;
  uni.insert(pb.begin(), pb.end());
  if (uni.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& p : pa) inter += pb.count(p);
  return static_cast<double>(inter) / static_cast<double>(uni.size());
}

inline double dist(const Point& p, const Point& q) {
  const double dy = static_cast<double>(p.first - q.first);
  const double dx = static_cast<double>(p.second - q.second);
  return std::sqrt(dy * dy + dx * dx);
}

inline double directed_min(const Point& p, const std::set<Point>& s) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : s) best = std::min(best, dist(p, q));
  return best;
}

inline double diagonal(const LabelMap& m) {
  return std::sqrt(static_cast<double>(m.height * m.height + m.width * m.width));
}

inline double hausdorff(const LabelMap& a, const LabelMap& b, int cls) {
  const auto pa = points_of(a, cls), pb = points_of(b, cls);
  if (pa.empty() && pb.empty()) return 0.0;
  if (pa.empty() || pb.empty()) return diagonal(a);
  double h = 0.0;
  for (const auto& p : pa) h = std::max(h, directed_min(p, pb));
  for (const auto& q : pb) h = std::max(h, directed_min(q, pa));
  return h;
}

inline std::set<Point> boundary(const LabelMap& m, int cls) {
  const auto pts = points_of(m, cls);
  std::set<Point> out;
  const long h = static_cast<long>(m.height), w = static_cast<long>(m.width);
  for (const auto& [y, x] : pts) {
    const Point nbrs[4] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
    for (const auto& n : nbrs) {
      const bool outside = n.first < 0 || n.second < 0 || n.first >= h || n.second >= w;
      if (outside || !pts.count(n)) {
        out.insert({y, x});
        break;
      }
    }
  }
  return out;
}

inline double assd(const LabelMap& a, const LabelMap& b, int cls) {
  const auto ba = boundary(a, cls), bb = boundary(b, cls);
  if (ba.empty() && bb.empty()) return 0.0;
  if (ba.empty() || bb.empty()) return diagonal(a);
  double sa = 0.0, sb = 0.0;
  for (const auto& p : ba) sa += directed_min(p, bb);
  for (const auto& q : bb) sb += directed_min(q, ba);
  return (sa + sb) / static_cast<double>(ba.size() + bb.size());
}

// Literal US(ReLU(eps * sign(AP(g, p)))) built from separate pooled and
// upsampled tensors.
inline Tensor lgs(const Tensor& g, double eps, std::size_t p) {
  const std::size_t h = g.dim(0), w = g.dim(1);
  Tensor pooled({h / p, w / p});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) pooled.at(y / p, x / p) += g.at(y, x);
  for (double& v : pooled.data()) v /= static_cast<double>(p * p);
  Tensor act(pooled.shape());
  for (std::size_t i = 0; i < act.size(); ++i) {
    const double s = pooled[i] > 0 ? 1.0 : (pooled[i] < 0 ? -1.0 : 0.0);
    act[i] = std::max(0.0, eps * s);
  }
  Tensor up({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) up.at(y, x) = act.at(y / p, x / p);
  return up;
}

// Direct 3x3 / padding-1 convolution.
inline Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3), cout = w.dim(0);
  Tensor out({n, cout, h, wd});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < wd; ++xx) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const long sy = static_cast<long>(y) + ky - 1;
                const long sx = static_cast<long>(xx) + kx - 1;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(wd)) continue;
                acc += w.at(co, ci, static_cast<std::size_t>(ky), static_cast<std::size_t>(kx)) *
                       x.at(s, ci, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
              }
          out.at(s, co, y, xx) = acc;
        }
  return out;
}

// Random label map whose class-`cls` pixels appear with probability `density`;
// other pixels are background.
inline LabelMap random_mask(Rng& rng, std::size_t h, std::size_t w, int cls, double density) {
  LabelMap m(h, w);
  for (auto& v : m.data) v = rng.uniform() < density ? static_cast<std::uint8_t>(cls) : 0;
  return m;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace lscl::oracle

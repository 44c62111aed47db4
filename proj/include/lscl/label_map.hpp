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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lscl/error.hpp"
#include "lscl/tensor.hpp"

namespace lscl {

inline constexpr int kBackground = 0;
inline constexpr int kLV = 1;
inline constexpr int kMYO = 2;
inline constexpr int kRV = 3;
inline constexpr int kNumClasses = 4;

inline const char* structure_name(int class_id) {
  switch (class_id) {
    case kBackground: return "BG";
    case kLV: return "LV";
    case kMYO: return "MYO";
    case kRV: return "RV";
  }
  return "?";
}

// h x w grid of class ids.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), data(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

  std::size_t count(int class_id) const {
    std::size_t n = 0;
    for (std::uint8_t v : data) n += (v == class_id);
    return n;
  }

  void validate(int num_classes) const {
    for (std::uint8_t v : data) {
      if (v >= num_classes) {
        throw InvalidArgument("label map holds class id " + std::to_string(v) +
                              " but only " + std::to_string(num_classes) + " classes exist");
      }
    }
  }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

inline void require_same_shape(const LabelMap& a, const LabelMap& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": label maps differ in shape (" +
                     std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

// Flattened class ids for a batch, in b x h x w order.
inline std::vector<int> flatten_labels(const std::vector<const LabelMap*>& batch) {
  std::vector<int> out;
  for (const LabelMap* m : batch) out.insert(out.end(), m->data.begin(), m->data.end());
  return out;
}

// b x c x h x w one-hot encoding.
inline Tensor one_hot(const std::vector<const LabelMap*>& batch, int num_classes) {
  if (batch.empty()) throw InvalidArgument("one_hot: empty batch");
  const std::size_t h = batch[0]->height, w = batch[0]->width;
  const std::size_t c = static_cast<std::size_t>(num_classes);
  Tensor out({batch.size(), c, h, w});
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (batch[s]->height != h || batch[s]->width != w) throw ShapeError("one_hot: ragged batch");
    batch[s]->validate(num_classes);
    for (std::size_t p = 0; p < h * w; ++p) out[(s * c + batch[s]->data[p]) * h * w + p] = 1.0;
  }
  return out;
}

// Per-pixel argmax over the channel axis of a c x h x w (or 1 x c x h x w)
// tensor; ties resolve to the lowest class id.
inline LabelMap argmax_labels(const Tensor& probs) {
  const std::size_t off = probs.rank() == 4 ? 1 : 0;
  if (probs.rank() != 3 + off || (off && probs.dim(0) != 1)) {
    throw ShapeError("argmax_labels expects c x h x w, got " + shape_str(probs.shape()));
  }
  const std::size_t c = probs.dim(off), h = probs.dim(off + 1), w = probs.dim(off + 2);
  LabelMap out(h, w);
  for (std::size_t p = 0; p < h * w; ++p) {
    std::size_t best = 0;
    for (std::size_t ch = 1; ch < c; ++ch) {
      if (probs[ch * h * w + p] > probs[best * h * w + p]) best = ch;
    }
    out.data[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

inline LabelMap rot90(const LabelMap& m, int turns = 1) {
  if (m.height != m.width) throw ShapeError("rot90 needs a square label map");
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return m;
  const std::size_t n = m.height;
  LabelMap out(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) out.data[y * n + x] = m.data[rot90_source(n, y, x, turns)];
  return out;
}

}  // namespace lscl

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

#include <vector>

#include "lscl/autodiff.hpp"
#include "lscl/label_map.hpp"

namespace lscl {

inline constexpr double kCrossEntropyWeight = 0.6;
inline constexpr double kDiceWeight = 0.4;
inline constexpr double kDiceSmooth = 1.0;

namespace loss_detail {

// 1 - mean over (batch, class) of (2 sum(p g) + s) / (sum p + sum g + s).
inline ad::NodeId dice_loss(ad::Tape& tape, ad::NodeId probs, const Tensor& target) {
  using namespace ad;
  const NodeId g = tape.leaf(target, false);
  const NodeId inter = sum_spatial(tape, mul(tape, probs, g));
  const NodeId psum = sum_spatial(tape, probs);

  Tensor gsum_s({target.dim(0), target.dim(1)});
  const std::size_t plane = target.dim(2) * target.dim(3);
  for (std::size_t i = 0; i < gsum_s.size(); ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += target[i * plane + p];
    gsum_s[i] = s + kDiceSmooth;
  }
  const NodeId smooth = tape.leaf(Tensor(gsum_s.shape(), kDiceSmooth), false);
  const NodeId num = add(tape, scale(tape, inter, 2.0), smooth);
  const NodeId den = add(tape, psum, tape.leaf(std::move(gsum_s), false));
  const NodeId mean_dice = reduce_mean(tape, div(tape, num, den));
  return sub(tape, tape.leaf(Tensor({1}, 1.0), false), mean_dice);
}

inline ad::NodeId weighted(ad::Tape& tape, ad::NodeId ce, ad::NodeId dice) {
  return ad::add(tape, ad::scale(tape, ce, kCrossEntropyWeight),
                 ad::scale(tape, dice, kDiceWeight));
}

inline void check_logits(const Tensor& logits, std::size_t batch, std::size_t h, std::size_t w,
                         const char* what) {
  if (logits.rank() != 4 || logits.dim(0) != batch || logits.dim(2) != h || logits.dim(3) != w) {
    throw ShapeError(std::string(what) + ": logits " + shape_str(logits.shape()) +
                     " do not match labels " + std::to_string(batch) + "x" + std::to_string(h) +
                     "x" + std::to_string(w));
  }
}

}  // namespace loss_detail

// 0.6 * cross-entropy + 0.4 * soft Dice loss against hard labels.
inline ad::NodeId combined_loss(ad::Tape& tape, ad::NodeId logits,
                                const std::vector<const LabelMap*>& labels) {
  using namespace ad;
  if (labels.empty()) throw InvalidArgument("combined_loss: empty label batch");
  const Tensor& lv = tape.value(logits);
  loss_detail::check_logits(lv, labels.size(), labels[0]->height, labels[0]->width,
                            "combined_loss");
  const int c = static_cast<int>(lv.dim(1));
  const Tensor target = one_hot(labels, c);  // validates class ids

  const NodeId probs = softmax(tape, logits);
  const NodeId picked = one_hot_select(tape, probs, flatten_labels(labels));
  const NodeId ce = scale(tape, reduce_mean(tape, log(tape, picked)), -1.0);
  return loss_detail::weighted(tape, ce, loss_detail::dice_loss(tape, probs, target));
}

inline ad::NodeId combined_loss(ad::Tape& tape, ad::NodeId logits, const LabelMap& label) {
  return combined_loss(tape, logits, std::vector<const LabelMap*>{&label});
}

// Same weighting against soft targets (b x c x h x w, each pixel summing to 1):
// CE = -mean over pixels of sum_c q_c log p_c.
inline ad::NodeId soft_combined_loss(ad::Tape& tape, ad::NodeId logits, const Tensor& target) {
  using namespace ad;
  const Tensor& lv = tape.value(logits);
  if (lv.shape() != target.shape()) {
    throw ShapeError("soft_combined_loss: logits " + shape_str(lv.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  const NodeId probs = softmax(tape, logits);
  const NodeId q = tape.leaf(target, false);
  const double pixels = static_cast<double>(lv.dim(0) * lv.dim(2) * lv.dim(3));
  const NodeId ce = scale(tape, reduce_sum(tape, mul(tape, q, log(tape, probs))), -1.0 / pixels);
  return loss_detail::weighted(tape, ce, loss_detail::dice_loss(tape, probs, target));
}

}  // namespace lscl

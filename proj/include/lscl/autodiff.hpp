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

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lscl/error.hpp"
#include "lscl/tensor.hpp"

namespace lscl::ad {

using NodeId = std::size_t;

// Primitive kinds the tape can record. Leaf is created through Tape::leaf and
// is rejected by Tape::record.
enum class Op {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kConv2d,
  kRelu,
  kMaxPool2,
  kUpsample2,
  kConcat,
  kSoftmax,
  kLog,
  kReduceSum,
  kReduceMean,
  kSumSpatial,
  kClamp,
  kOneHotSelect,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kConv2d: return "conv2d";
    case Op::kRelu: return "relu";
    case Op::kMaxPool2: return "maxpool2";
    case Op::kUpsample2: return "upsample2";
    case Op::kConcat: return "concat";
    case Op::kSoftmax: return "softmax";
    case Op::kLog: return "log";
    case Op::kReduceSum: return "reduce_sum";
    case Op::kReduceMean: return "reduce_mean";
    case Op::kSumSpatial: return "sum_spatial";
    case Op::kClamp: return "clamp";
    case Op::kOneHotSelect: return "one_hot_select";
  }
  return "unknown";
}

struct Attrs {
  double scalar = 0.0;  // scale factor
  double lo = 0.0;      // clamp bounds
  double hi = 0.0;
  std::vector<int> labels;  // one_hot_select: b*h*w class ids
};

struct Node {
  Op op = Op::kLeaf;
  std::vector<NodeId> inputs;
  Attrs attrs;
  Tensor value;
  bool needs_grad = false;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Unfolds one C x H x W image into a (C*9) x (H*W) patch matrix for a 3x3
// kernel with zero padding 1.
inline void im2col3x3(const double* img, std::size_t channels, std::size_t h,
                      std::size_t w, double* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col + ((c * 3 + ky) * 3 + kx) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          double* out = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(out, out + w, 0.0);
            continue;
          }
          const double* src = plane + sy * w;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          if (x0 > 0) out[0] = 0.0;
          if (x1 < w) out[w - 1] = 0.0;
          for (std::size_t x = x0; x < x1; ++x) out[x] = src[x + dx];
        }
      }
    }
  }
}

// Adjoint of im2col3x3: scatters patch gradients back onto the image.
inline void col2im3x3_add(const double* col, std::size_t channels,
                          std::size_t h, std::size_t w, double* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    double* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col + ((c * 3 + ky) * 3 + kx) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const double* in = row + y * w;
          double* dst = plane + sy * w;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          for (std::size_t x = x0; x < x1; ++x) dst[x + dx] += in[x];
        }
      }
    }
  }
}

[[noreturn]] inline void shape_fail(Op op, const std::string& what,
                                    const std::vector<const Tensor*>& ins) {
  std::string msg = std::string(op_name(op)) + ": " + what + " (input shapes";
  for (const Tensor* t : ins) msg += " " + shape_str(t->shape());
  msg += ")";
  throw ShapeError(msg);
}

inline void require_rank4(Op op, const Tensor& t) {
  if (t.rank() != 4) shape_fail(op, "expects a rank-4 tensor", {&t});
}

}  // namespace detail

// Eager forward evaluation of one primitive. Exposed separately so tests can
// compare the recorded value against a direct computation.
inline Tensor forward_primitive(Op op, const std::vector<const Tensor*>& in,
                                const Attrs& attrs) {
  using detail::require_rank4;
  using detail::shape_fail;
  auto arity = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeError(std::string(op_name(op)) + ": expects " +
                       std::to_string(n) + " inputs, got " +
                       std::to_string(in.size()));
    }
  };
  auto same_shape = [&]() {
    if (in[0]->shape() != in[1]->shape()) shape_fail(op, "shape mismatch", in);
  };

  switch (op) {
    case Op::kLeaf:
      throw InvalidArgument("leaf nodes are created with Tape::leaf");

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      arity(2);
      same_shape();
      Tensor out(in[0]->shape());
      const double* a = in[0]->raw();
      const double* b = in[1]->raw();
      double* o = out.raw();
      const std::size_t n = out.size();
      if (op == Op::kAdd) for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
      if (op == Op::kSub) for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
      if (op == Op::kMul) for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
      if (op == Op::kDiv) for (std::size_t i = 0; i < n; ++i) o[i] = a[i] / b[i];
      return out;
    }

    case Op::kScale: {
      arity(1);
      Tensor out(in[0]->shape());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = attrs.scalar * (*in[0])[i];
      return out;
    }

    case Op::kConv2d: {
      arity(3);
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      const Tensor& b = *in[2];
      require_rank4(op, x);
      if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3 || w.dim(1) != x.dim(1) ||
          b.rank() != 1 || b.dim(0) != w.dim(0)) {
        shape_fail(op, "kernel must be Cout x Cin x 3 x 3 with Cout biases", in);
      }
      const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
      const std::size_t cout = w.dim(0), k = cin * 9, hw = h * wd;
      Tensor out({n, cout, h, wd});
      Buffer col(k * hw);
      detail::ConstMapMat wm(w.raw(), cout, k);
      Eigen::Map<const Eigen::VectorXd> bias(b.raw(), cout);
      for (std::size_t s = 0; s < n; ++s) {
        detail::im2col3x3(x.raw() + s * cin * hw, cin, h, wd, col.data());
        detail::ConstMapMat cm(col.data(), k, hw);
        detail::MapMat om(out.raw() + s * cout * hw, cout, hw);
        om.noalias() = wm * cm;
        om.colwise() += bias;
      }
      return out;
    }

    case Op::kRelu: {
      arity(1);
      Tensor out(in[0]->shape());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, (*in[0])[i]);
      return out;
    }

    case Op::kMaxPool2: {
      arity(1);
      const Tensor& x = *in[0];
      require_rank4(op, x);
      if (x.dim(2) % 2 || x.dim(3) % 2) shape_fail(op, "spatial size must be even", in);
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
      Tensor out({n, c, h, w});
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
              out.at(s, ch, y, xx) = std::max(
                  std::max(x.at(s, ch, 2 * y, 2 * xx), x.at(s, ch, 2 * y, 2 * xx + 1)),
                  std::max(x.at(s, ch, 2 * y + 1, 2 * xx), x.at(s, ch, 2 * y + 1, 2 * xx + 1)));
            }
      return out;
    }

    case Op::kUpsample2: {
      arity(1);
      const Tensor& x = *in[0];
      require_rank4(op, x);
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
      Tensor out({n, c, 2 * h, 2 * w});
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t xx = 0; xx < 2 * w; ++xx)
              out.at(s, ch, y, xx) = x.at(s, ch, y / 2, xx / 2);
      return out;
    }

    case Op::kConcat: {
      arity(2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      require_rank4(op, a);
      require_rank4(op, b);
      if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        shape_fail(op, "batch and spatial sizes must agree", in);
      }
      const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
      const std::size_t plane = a.dim(2) * a.dim(3);
      Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
      for (std::size_t s = 0; s < n; ++s) {
        std::copy_n(a.raw() + s * ca * plane, ca * plane, out.raw() + s * (ca + cb) * plane);
        std::copy_n(b.raw() + s * cb * plane, cb * plane,
                    out.raw() + (s * (ca + cb) + ca) * plane);
      }
      return out;
    }

    case Op::kSoftmax: {
      arity(1);
      const Tensor& x = *in[0];
      require_rank4(op, x);
      const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
      Tensor out(x.shape());
      for (std::size_t s = 0; s < n; ++s) {
        const double* xs = x.raw() + s * c * plane;
        double* os = out.raw() + s * c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t ch = 0; ch < c; ++ch) mx = std::max(mx, xs[ch * plane + p]);
          double z = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double e = std::exp(xs[ch * plane + p] - mx);
            os[ch * plane + p] = e;
            z += e;
          }
          for (std::size_t ch = 0; ch < c; ++ch) os[ch * plane + p] /= z;
        }
      }
      return out;
    }

    case Op::kLog: {
      arity(1);
      Tensor out(in[0]->shape());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log((*in[0])[i]);
      return out;
    }

    case Op::kReduceSum:
    case Op::kReduceMean: {
      arity(1);
      double s = in[0]->sum();
      if (op == Op::kReduceMean) s /= static_cast<double>(in[0]->size());
      return Tensor({1}, s);
    }

    case Op::kSumSpatial: {
      arity(1);
      const Tensor& x = *in[0];
      require_rank4(op, x);
      const std::size_t nc = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
      Tensor out({x.dim(0), x.dim(1)});
      for (std::size_t i = 0; i < nc; ++i) {
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += x[i * plane + p];
        out[i] = s;
      }
      return out;
    }

    case Op::kClamp: {
      arity(1);
      if (!(attrs.lo <= attrs.hi)) throw InvalidArgument("clamp: lo must not exceed hi");
      Tensor out(in[0]->shape());
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp((*in[0])[i], attrs.lo, attrs.hi);
      }
      return out;
    }

    case Op::kOneHotSelect: {
      arity(1);
      const Tensor& x = *in[0];
      require_rank4(op, x);
      const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
      if (attrs.labels.size() != n * plane) {
        shape_fail(op, "label count " + std::to_string(attrs.labels.size()) +
                           " does not match batch x height x width", in);
      }
      Tensor out({n, 1, x.dim(2), x.dim(3)});
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t p = 0; p < plane; ++p) {
          const int label = attrs.labels[s * plane + p];
          if (label < 0 || static_cast<std::size_t>(label) >= c) {
            throw InvalidArgument("one_hot_select: class id " + std::to_string(label) +
                                  " outside [0, " + std::to_string(c) + ")");
          }
          out[s * plane + p] = x[(s * c + label) * plane + p];
        }
      return out;
    }
  }
  throw InvalidArgument("unsupported primitive kind");
}

// Append-only record of eagerly evaluated primitives. Node inputs always refer
// to earlier nodes, so reverse index order is a valid topological order.
class Tape {
 public:
  NodeId leaf(Tensor value, bool needs_grad = true) {
    require_finite(value, "leaf input");
    nodes_.push_back(Node{Op::kLeaf, {}, {}, std::move(value), needs_grad});
    return nodes_.size() - 1;
  }

  NodeId record(Op op, std::vector<NodeId> inputs, Attrs attrs = {}) {
    std::vector<const Tensor*> values;
    bool needs_grad = false;
    for (NodeId id : inputs) {
      if (id >= nodes_.size()) {
        throw InvalidArgument(std::string(op_name(op)) + ": input node " +
                              std::to_string(id) + " does not exist");
      }
      values.push_back(&nodes_[id].value);
      needs_grad = needs_grad || nodes_[id].needs_grad;
    }
    Tensor out = forward_primitive(op, values, attrs);
    require_finite(out, op_name(op));
    nodes_.push_back(Node{op, std::move(inputs), std::move(attrs), std::move(out), needs_grad});
    return nodes_.size() - 1;
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// Gradient slots indexed by node id; empty where the root does not depend on
// the node or the node does not need a gradient.
class Gradients {
 public:
  explicit Gradients(std::size_t n) : slots_(n) {}

  bool has(NodeId id) const { return id < slots_.size() && slots_[id].has_value(); }

  const Tensor& at(NodeId id) const {
    if (!has(id)) throw InvalidArgument("no gradient for node " + std::to_string(id));
    return *slots_[id];
  }

  std::optional<Tensor>& slot(NodeId id) { return slots_[id]; }

 private:
  std::vector<std::optional<Tensor>> slots_;
};

namespace detail {

inline Tensor& accumulate(Gradients& g, NodeId id, const Shape& shape) {
  auto& slot = g.slot(id);
  if (!slot) slot.emplace(shape);
  return *slot;
}

inline void backprop_node(const Tape& tape, NodeId id, const Tensor& gy, Gradients& grads) {
  const Node& node = tape.node(id);
  auto wants = [&](std::size_t k) { return tape.node(node.inputs[k]).needs_grad; };
  auto input = [&](std::size_t k) -> const Tensor& { return tape.value(node.inputs[k]); };
  auto slot = [&](std::size_t k) -> Tensor& {
    return accumulate(grads, node.inputs[k], input(k).shape());
  };
  const std::size_t n = gy.size();

  switch (node.op) {
    case Op::kLeaf:
      return;

    case Op::kAdd:
      if (wants(0)) { Tensor& g = slot(0); for (std::size_t i = 0; i < n; ++i) g[i] += gy[i]; }
      if (wants(1)) { Tensor& g = slot(1); for (std::size_t i = 0; i < n; ++i) g[i] += gy[i]; }
      return;

    case Op::kSub:
      if (wants(0)) { Tensor& g = slot(0); for (std::size_t i = 0; i < n; ++i) g[i] += gy[i]; }
      if (wants(1)) { Tensor& g = slot(1); for (std::size_t i = 0; i < n; ++i) g[i] -= gy[i]; }
      return;

    case Op::kMul: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      if (wants(0)) { Tensor& g = slot(0); for (std::size_t i = 0; i < n; ++i) g[i] += gy[i] * b[i]; }
      if (wants(1)) { Tensor& g = slot(1); for (std::size_t i = 0; i < n; ++i) g[i] += gy[i] * a[i]; }
      return;
    }

    case Op::kDiv: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      if (wants(0)) { Tensor& g = slot(0); for (std::size_t i = 0; i < n; ++i) g[i] += gy[i] / b[i]; }
      if (wants(1)) {
        Tensor& g = slot(1);
        for (std::size_t i = 0; i < n; ++i) g[i] -= gy[i] * a[i] / (b[i] * b[i]);
      }
      return;
    }

    case Op::kScale:
      if (wants(0)) {
        Tensor& g = slot(0);
        for (std::size_t i = 0; i < n; ++i) g[i] += node.attrs.scalar * gy[i];
      }
      return;

    case Op::kConv2d: {
      const Tensor& x = input(0);
      const Tensor& w = input(1);
      const std::size_t bn = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
      const std::size_t cout = w.dim(0), k = cin * 9, hw = h * wd;
      Buffer col(k * hw);
      ConstMapMat wm(w.raw(), cout, k);
      Tensor* gx = wants(0) ? &slot(0) : nullptr;
      Tensor* gw = wants(1) ? &slot(1) : nullptr;
      Tensor* gb = wants(2) ? &slot(2) : nullptr;
      for (std::size_t s = 0; s < bn; ++s) {
        ConstMapMat gym(gy.raw() + s * cout * hw, cout, hw);
        if (gw) {
          im2col3x3(x.raw() + s * cin * hw, cin, h, wd, col.data());
          ConstMapMat cm(col.data(), k, hw);
          MapMat gwm(gw->raw(), cout, k);
          gwm.noalias() += gym * cm.transpose();
        }
        if (gb) {
          for (std::size_t c = 0; c < cout; ++c) (*gb)[c] += gym.row(c).sum();
        }
        if (gx) {
          MapMat cm(col.data(), k, hw);
          cm.noalias() = wm.transpose() * gym;
          col2im3x3_add(col.data(), cin, h, wd, gx->raw() + s * cin * hw);
        }
      }
      return;
    }

    case Op::kRelu:
      if (wants(0)) {
        const Tensor& x = input(0);
        Tensor& g = slot(0);
        for (std::size_t i = 0; i < n; ++i) {
          if (x[i] > 0.0) g[i] += gy[i];
        }
      }
      return;

    case Op::kMaxPool2: {
      if (!wants(0)) return;
      const Tensor& x = input(0);
      Tensor& g = slot(0);
      const std::size_t bn = gy.dim(0), c = gy.dim(1), h = gy.dim(2), w = gy.dim(3);
      for (std::size_t s = 0; s < bn; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
              // Route to the first maximum in row-major window order.
              std::size_t by = 2 * y, bx = 2 * xx;
              double best = x.at(s, ch, by, bx);
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const double v = x.at(s, ch, 2 * y + dy, 2 * xx + dx);
                  if (v > best) {
                    best = v;
                    by = 2 * y + dy;
                    bx = 2 * xx + dx;
                  }
                }
              g.at(s, ch, by, bx) += gy.at(s, ch, y, xx);
            }
      return;
    }

    case Op::kUpsample2: {
      if (!wants(0)) return;
      Tensor& g = slot(0);
      const std::size_t bn = gy.dim(0), c = gy.dim(1), h = gy.dim(2), w = gy.dim(3);
      for (std::size_t s = 0; s < bn; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              g.at(s, ch, y / 2, xx / 2) += gy.at(s, ch, y, xx);
      return;
    }

    case Op::kConcat: {
      const std::size_t bn = gy.dim(0);
      const std::size_t ca = input(0).dim(1), cb = input(1).dim(1);
      const std::size_t plane = gy.dim(2) * gy.dim(3);
      for (std::size_t s = 0; s < bn; ++s) {
        const double* src = gy.raw() + s * (ca + cb) * plane;
        if (wants(0)) {
          double* dst = slot(0).raw() + s * ca * plane;
          for (std::size_t i = 0; i < ca * plane; ++i) dst[i] += src[i];
        }
        if (wants(1)) {
          double* dst = slot(1).raw() + s * cb * plane;
          for (std::size_t i = 0; i < cb * plane; ++i) dst[i] += src[ca * plane + i];
        }
      }
      return;
    }

    case Op::kSoftmax: {
      if (!wants(0)) return;
      const Tensor& p = node.value;
      Tensor& g = slot(0);
      const std::size_t bn = p.dim(0), c = p.dim(1), plane = p.dim(2) * p.dim(3);
      for (std::size_t s = 0; s < bn; ++s)
        for (std::size_t q = 0; q < plane; ++q) {
          const std::size_t base = s * c * plane + q;
          double dot = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) dot += gy[base + ch * plane] * p[base + ch * plane];
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = base + ch * plane;
            g[i] += p[i] * (gy[i] - dot);
          }
        }
      return;
    }

    case Op::kLog:
      if (wants(0)) {
        const Tensor& x = input(0);
        Tensor& g = slot(0);
        for (std::size_t i = 0; i < n; ++i) g[i] += gy[i] / x[i];
      }
      return;

    case Op::kReduceSum:
    case Op::kReduceMean:
      if (wants(0)) {
        Tensor& g = slot(0);
        const double d = node.op == Op::kReduceSum
                             ? gy[0]
                             : gy[0] / static_cast<double>(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
      }
      return;

    case Op::kSumSpatial:
      if (wants(0)) {
        Tensor& g = slot(0);
        const std::size_t plane = g.dim(2) * g.dim(3);
        for (std::size_t i = 0; i < gy.size(); ++i)
          for (std::size_t p = 0; p < plane; ++p) g[i * plane + p] += gy[i];
      }
      return;

    case Op::kClamp:
      if (wants(0)) {
        const Tensor& x = input(0);
        Tensor& g = slot(0);
        for (std::size_t i = 0; i < n; ++i) {
          if (x[i] >= node.attrs.lo && x[i] <= node.attrs.hi) g[i] += gy[i];
        }
      }
      return;

    case Op::kOneHotSelect:
      if (wants(0)) {
        Tensor& g = slot(0);
        const std::size_t c = g.dim(1), plane = g.dim(2) * g.dim(3);
        for (std::size_t s = 0; s < g.dim(0); ++s)
          for (std::size_t p = 0; p < plane; ++p) {
            const int label = node.attrs.labels[s * plane + p];
            g[(s * c + label) * plane + p] += gy[s * plane + p];
          }
      }
      return;
  }
}

}  // namespace detail

// Reverse accumulation from a scalar root. Every reachable node that needs a
// gradient receives one with the shape of its forward value.
inline Gradients backward(const Tape& tape, NodeId root) {
  if (root >= tape.size()) throw InvalidArgument("backward: root node does not exist");
  const Tensor& rv = tape.value(root);
  if (rv.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + shape_str(rv.shape()));
  }
  Gradients grads(tape.size());
  grads.slot(root).emplace(rv.shape(), 1.0);
  for (NodeId id = root + 1; id-- > 0;) {
    if (!grads.has(id) || !tape.node(id).needs_grad) continue;
    detail::backprop_node(tape, id, grads.at(id), grads);
  }
  return grads;
}

// Convenience wrappers over Tape::record.
inline NodeId add(Tape& t, NodeId a, NodeId b) { return t.record(Op::kAdd, {a, b}); }
inline NodeId sub(Tape& t, NodeId a, NodeId b) { return t.record(Op::kSub, {a, b}); }
inline NodeId mul(Tape& t, NodeId a, NodeId b) { return t.record(Op::kMul, {a, b}); }
inline NodeId div(Tape& t, NodeId a, NodeId b) { return t.record(Op::kDiv, {a, b}); }
inline NodeId scale(Tape& t, NodeId a, double s) {
  Attrs at;
  at.scalar = s;
  return t.record(Op::kScale, {a}, std::move(at));
}
inline NodeId conv2d(Tape& t, NodeId x, NodeId w, NodeId b) {
  return t.record(Op::kConv2d, {x, w, b});
}
inline NodeId relu(Tape& t, NodeId x) { return t.record(Op::kRelu, {x}); }
inline NodeId maxpool2(Tape& t, NodeId x) { return t.record(Op::kMaxPool2, {x}); }
inline NodeId upsample2(Tape& t, NodeId x) { return t.record(Op::kUpsample2, {x}); }
inline NodeId concat(Tape& t, NodeId a, NodeId b) { return t.record(Op::kConcat, {a, b}); }
inline NodeId softmax(Tape& t, NodeId x) { return t.record(Op::kSoftmax, {x}); }
inline NodeId log(Tape& t, NodeId x) { return t.record(Op::kLog, {x}); }
inline NodeId reduce_sum(Tape& t, NodeId x) { return t.record(Op::kReduceSum, {x}); }
inline NodeId reduce_mean(Tape& t, NodeId x) { return t.record(Op::kReduceMean, {x}); }
inline NodeId sum_spatial(Tape& t, NodeId x) { return t.record(Op::kSumSpatial, {x}); }
inline NodeId clamp(Tape& t, NodeId x, double lo, double hi) {
  Attrs at;
  at.lo = lo;
  at.hi = hi;
  return t.record(Op::kClamp, {x}, std::move(at));
}
inline NodeId one_hot_select(Tape& t, NodeId x, std::vector<int> labels) {
  Attrs at;
  at.labels = std::move(labels);
  return t.record(Op::kOneHotSelect, {x}, std::move(at));
}

// Builds a scalar function of one input tensor on a fresh tape.
using ScalarFn = std::function<NodeId(Tape&, NodeId)>;

struct FdOptions {
  double h = 1e-5;
  // 0 checks every coordinate; otherwise this many coordinates drawn with rng_seed.
  std::size_t sample_count = 0;
  std::uint64_t rng_seed = 0;
};

// Max over checked coordinates of |analytic - central| / max(1e-12, |analytic| + |central|).
inline double finite_difference_check(const ScalarFn& f, const Tensor& x,
                                      const FdOptions& opts = {}) {
  auto eval = [&](const Tensor& at) {
    Tape tape;
    const NodeId in = tape.leaf(at, false);
    const double v = tape.value(f(tape, in))[0];
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: f is not finite");
    return v;
  };

  Tape tape;
  const NodeId in = tape.leaf(x, true);
  const NodeId root = f(tape, in);
  const Gradients grads = backward(tape, root);
  const Tensor analytic = grads.has(in) ? grads.at(in) : Tensor(x.shape());

  std::vector<std::size_t> coords;
  if (opts.sample_count == 0 || opts.sample_count >= x.size()) {
    coords.resize(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
  } else {
    Rng rng(opts.rng_seed);
    for (std::size_t i = 0; i < opts.sample_count; ++i) coords.push_back(rng.below(x.size()));
  }

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i : coords) {
    const double orig = probe[i];
    probe[i] = orig + opts.h;
    const double fp = eval(probe);
    probe[i] = orig - opts.h;
    const double fm = eval(probe);
    probe[i] = orig;
    const double central = (fp - fm) / (2.0 * opts.h);
    const double a = analytic[i];
    const double err = std::abs(a - central) / std::max(1e-12, std::abs(a) + std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace lscl::ad

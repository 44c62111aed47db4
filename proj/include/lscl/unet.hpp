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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lscl/autodiff.hpp"
#include "lscl/error.hpp"
#include "lscl/tensor.hpp"

namespace lscl {

struct UNetConfig {
  int in_channels = 1;
  int num_classes = 4;
  int base_channels = 8;
  int depth = 2;  // number of downsampling stages

  void validate() const {
    if (in_channels < 1 || num_classes < 2 || base_channels < 1 || depth < 1) {
      throw InvalidArgument("UNetConfig requires in_channels >= 1, num_classes >= 2, "
                            "base_channels >= 1 and depth >= 1");
    }
  }

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

using ParamMap = std::map<std::string, Tensor>;

struct Model {
  UNetConfig config;
  ParamMap params;  // sorted by name
};

namespace unet_detail {

struct ConvSpec {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
};

inline std::string level_tag(const char* prefix, int level) {
  return std::string(prefix) + std::to_string(level);
}

// Every 3x3 convolution of the network, in forward order.
//   enc{l}: in -> c_l -> c_l, then maxpool
//   mid:    c_{d-1} -> c_d -> c_d
//   dec{l}: upsample, concat skip (c_{l+1} + c_l) -> c_l -> c_l
//   head:   c_0 -> num_classes
inline std::vector<ConvSpec> conv_layout(const UNetConfig& cfg) {
  auto width = [&](int level) { return static_cast<std::size_t>(cfg.base_channels) << level; };
  std::vector<ConvSpec> convs;
  std::size_t prev = static_cast<std::size_t>(cfg.in_channels);
  for (int l = 0; l < cfg.depth; ++l) {
    convs.push_back({level_tag("enc", l) + ".conv0", prev, width(l)});
    convs.push_back({level_tag("enc", l) + ".conv1", width(l), width(l)});
    prev = width(l);
  }
  convs.push_back({"mid.conv0", prev, width(cfg.depth)});
  convs.push_back({"mid.conv1", width(cfg.depth), width(cfg.depth)});
  for (int l = cfg.depth - 1; l >= 0; --l) {
    convs.push_back({level_tag("dec", l) + ".conv0", width(l + 1) + width(l), width(l)});
    convs.push_back({level_tag("dec", l) + ".conv1", width(l), width(l)});
  }
  convs.push_back({"head", width(0), static_cast<std::size_t>(cfg.num_classes)});
  return convs;
}

}  // namespace unet_detail

// Number of scalar parameters implied by the config alone.
inline std::size_t parameter_count(const UNetConfig& cfg) {
  std::size_t total = 0;
  for (const auto& c : unet_detail::conv_layout(cfg)) total += c.out * c.in * 9 + c.out;
  return total;
}

// He initialization: kernels ~ N(0, 2 / fan_in) with fan_in = Cin * 9, biases 0.
inline Model init_unet(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  Model model{config, {}};
  Rng rng(seed);
  for (const auto& c : unet_detail::conv_layout(config)) {
    Tensor w({c.out, c.in, 3, 3});
    const double stddev = std::sqrt(2.0 / static_cast<double>(c.in * 9));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
    model.params.emplace(c.name + ".weight", std::move(w));
    model.params.emplace(c.name + ".bias", Tensor({c.out}));
  }
  return model;
}

struct ForwardResult {
  ad::NodeId logits = 0;
  std::map<std::string, ad::NodeId> param_nodes;
};

// Records the network on `tape`. `input` must be a b x in_channels x h x w
// node with h and w divisible by 2^depth.
inline ForwardResult forward(const Model& model, ad::Tape& tape, ad::NodeId input,
                             bool param_grads = true) {
  const UNetConfig& cfg = model.config;
  const Tensor& x = tape.value(input);
  const std::size_t div = std::size_t{1} << cfg.depth;
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(cfg.in_channels)) {
    throw ShapeError("forward: expected b x " + std::to_string(cfg.in_channels) +
                     " x h x w input, got " + shape_str(x.shape()));
  }
  if (x.dim(2) % div || x.dim(3) % div) {
    throw ShapeError("forward: spatial size " + shape_str(x.shape()) +
                     " not divisible by 2^depth = " + std::to_string(div));
  }

  ForwardResult res;
  auto param = [&](const std::string& name) {
    auto it = model.params.find(name);
    if (it == model.params.end()) throw InvalidArgument("model is missing parameter " + name);
    const ad::NodeId id = tape.leaf(it->second, param_grads);
    res.param_nodes.emplace(name, id);
    return id;
  };
  auto conv = [&](ad::NodeId in, const std::string& name) {
    return ad::conv2d(tape, in, param(name + ".weight"), param(name + ".bias"));
  };
  auto conv_relu = [&](ad::NodeId in, const std::string& name) {
    return ad::relu(tape, conv(in, name));
  };

  std::vector<ad::NodeId> skips;
  ad::NodeId h = input;
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string tag = unet_detail::level_tag("enc", l);
    h = conv_relu(conv_relu(h, tag + ".conv0"), tag + ".conv1");
    skips.push_back(h);
    h = ad::maxpool2(tape, h);
  }
  h = conv_relu(conv_relu(h, "mid.conv0"), "mid.conv1");
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::string tag = unet_detail::level_tag("dec", l);
    h = ad::concat(tape, ad::upsample2(tape, h), skips[static_cast<std::size_t>(l)]);
    h = conv_relu(conv_relu(h, tag + ".conv0"), tag + ".conv1");
  }
  res.logits = conv(h, "head");
  return res;
}

// Logits without keeping a caller-visible tape.
inline Tensor predict_logits(const Model& model, const Tensor& batch) {
  ad::Tape tape;
  const ad::NodeId in = tape.leaf(batch, false);
  const ForwardResult r = forward(model, tape, in, false);
  return tape.value(r.logits);
}

inline ParamMap collect_param_grads(const ad::Gradients& grads, const ForwardResult& fwd) {
  ParamMap out;
  for (const auto& [name, id] : fwd.param_nodes) {
    if (grads.has(id)) out.emplace(name, grads.at(id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptKind { kAdam = 0, kSgdMomentum = 1 };

struct OptState {
  OptKind kind = OptKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  std::int64_t step = 0;
  ParamMap first;   // Adam m, or SGD velocity
  ParamMap second;  // Adam v

  static OptState adam(double lr) {
    OptState s;
    s.kind = OptKind::kAdam;
    s.lr = lr;
    return s;
  }
  static OptState sgd_momentum(double lr, double momentum = 0.9) {
    OptState s;
    s.kind = OptKind::kSgdMomentum;
    s.lr = lr;
    s.momentum = momentum;
    return s;
  }
};

namespace unet_detail {

inline const Tensor& grad_for(const ParamMap& grads, const std::string& name, const Tensor& p) {
  auto it = grads.find(name);
  if (it == grads.end()) throw InvalidArgument("optimizer: missing gradient for " + name);
  if (it->second.shape() != p.shape()) {
    throw ShapeError("optimizer: gradient for " + name + " has shape " +
                     shape_str(it->second.shape()) + ", parameter has " + shape_str(p.shape()));
  }
  return it->second;
}

inline Tensor& buffer(ParamMap& bufs, const std::string& name, const Tensor& like) {
  auto it = bufs.find(name);
  if (it == bufs.end()) it = bufs.emplace(name, Tensor(like.shape())).first;
  return it->second;
}

}  // namespace unet_detail

// Bias-corrected Adam.
inline void adam_step(ParamMap& params, const ParamMap& grads, OptState& opt) {
  for (const auto& [name, p] : params) unet_detail::grad_for(grads, name, p);
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = unet_detail::buffer(opt.first, name, p);
    Tensor& v = unet_detail::buffer(opt.second, name, p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

// v <- mu * v + g;  theta <- theta - lr * v
inline void sgd_momentum_step(ParamMap& params, const ParamMap& grads, OptState& opt) {
  for (const auto& [name, p] : params) unet_detail::grad_for(grads, name, p);
  ++opt.step;
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& vel = unet_detail::buffer(opt.first, name, p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      vel[i] = opt.momentum * vel[i] + g[i];
      p[i] -= opt.lr * vel[i];
    }
  }
}

inline void optimizer_step(ParamMap& params, const ParamMap& grads, OptState& opt) {
  if (opt.kind == OptKind::kAdam) {
    adam_step(params, grads, opt);
  } else {
    sgd_momentum_step(params, grads, opt);
  }
}

inline void adam_step(Model& model, const ParamMap& grads, OptState& opt) {
  adam_step(model.params, grads, opt);
}
inline void sgd_momentum_step(Model& model, const ParamMap& grads, OptState& opt) {
  sgd_momentum_step(model.params, grads, opt);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (all integers uint32 little-endian, payload float64 little-endian):
//   "LSCL" | version = 1 | entry count | entries...
//   entry: name length | UTF-8 name | rank | dims[rank] | payload
//
// Entries are written in name order. The model config is stored as the
// entry "config" = [in_channels, num_classes, base_channels, depth]; model
// parameters use the prefix "param."; optimizer state, when present, uses
// "opt.meta" = [kind, lr, beta1, beta2, eps, momentum, step] and the
// prefixes "opt.m." and "opt.v.".

inline constexpr char kCheckpointMagic[4] = {'L', 'S', 'C', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &d, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8, "tensor payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    double d = 0.0;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  std::string str(std::size_t n) {
    need(n, "entry name");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ckpt_detail

using TensorEntries = std::map<std::string, Tensor>;

inline std::string encode_entries(const TensorEntries& entries) {
  std::string out(kCheckpointMagic, 4);
  ckpt_detail::put_u32(out, kCheckpointVersion);
  ckpt_detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    ckpt_detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    ckpt_detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) ckpt_detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) ckpt_detail::put_f64(out, v);
  }
  return out;
}

inline TensorEntries decode_entries(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint has bad magic (expected \"LSCL\")");
  }
  ckpt_detail::Reader rd(bytes);
  rd.str(4);
  const std::uint32_t version = rd.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = rd.u32("entry count");
  TensorEntries entries;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = rd.str(rd.u32("name length"));
    const std::uint32_t rank = rd.u32("rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(rd.u32("dims"));
    const std::size_t n = shape_size(shape);
    rd.need(n * 8, "tensor payload");
    std::vector<double> data(n);
    for (double& v : data) v = rd.f64();
    try {
      entries.insert_or_assign(name, Tensor(std::move(shape), std::move(data)));
    } catch (const ShapeError& err) {
      throw FormatError("checkpoint entry " + name + ": " + err.what());
    }
  }
  if (!rd.done()) throw FormatError("checkpoint has trailing bytes after last entry");
  return entries;
}

inline TensorEntries to_entries(const Model& model, const OptState* opt) {
  TensorEntries e;
  const UNetConfig& c = model.config;
  e.emplace("config", Tensor({4}, {double(c.in_channels), double(c.num_classes),
                                   double(c.base_channels), double(c.depth)}));
  for (const auto& [name, t] : model.params) e.emplace("param." + name, t);
  if (opt) {
    e.emplace("opt.meta", Tensor({7}, {double(opt->kind), opt->lr, opt->beta1, opt->beta2,
                                       opt->eps, opt->momentum, double(opt->step)}));
    for (const auto& [name, t] : opt->first) e.emplace("opt.m." + name, t);
    for (const auto& [name, t] : opt->second) e.emplace("opt.v." + name, t);
  }
  return e;
}

struct Checkpoint {
  Model model;
  std::optional<OptState> opt;
};

inline Checkpoint from_entries(const TensorEntries& e) {
  auto cfg_it = e.find("config");
  if (cfg_it == e.end() || cfg_it->second.size() != 4) {
    throw FormatError("checkpoint is missing the config entry");
  }
  const Tensor& ct = cfg_it->second;
  Checkpoint ck;
  ck.model.config = UNetConfig{static_cast<int>(ct[0]), static_cast<int>(ct[1]),
                               static_cast<int>(ct[2]), static_cast<int>(ct[3])};
  auto strip = [](const std::string& s, const std::string& prefix) -> std::optional<std::string> {
    if (s.rfind(prefix, 0) == 0) return s.substr(prefix.size());
    return std::nullopt;
  };
  OptState opt;
  bool has_opt = false;
  for (const auto& [name, t] : e) {
    if (auto p = strip(name, "param.")) {
      ck.model.params.emplace(*p, t);
    } else if (auto m = strip(name, "opt.m.")) {
      opt.first.emplace(*m, t);
    } else if (auto v = strip(name, "opt.v.")) {
      opt.second.emplace(*v, t);
    } else if (name == "opt.meta") {
      if (t.size() != 7) throw FormatError("checkpoint opt.meta must hold 7 values");
      has_opt = true;
      opt.kind = t[0] == 0.0 ? OptKind::kAdam : OptKind::kSgdMomentum;
      opt.lr = t[1];
      opt.beta1 = t[2];
      opt.beta2 = t[3];
      opt.eps = t[4];
      opt.momentum = t[5];
      opt.step = static_cast<std::int64_t>(t[6]);
    }
  }
  // Parameter shapes must be exactly what the config implies.
  const Model reference = init_unet(ck.model.config, 0);
  if (reference.params.size() != ck.model.params.size()) {
    throw FormatError("checkpoint parameter set does not match its config");
  }
  for (const auto& [name, t] : reference.params) {
    auto it = ck.model.params.find(name);
    if (it == ck.model.params.end() || it->second.shape() != t.shape()) {
      throw FormatError("checkpoint parameter " + name + " missing or mis-shaped");
    }
  }
  if (has_opt) ck.opt = std::move(opt);
  return ck;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

inline void save_checkpoint(const Model& model, const OptState* opt,
                            const std::filesystem::path& path) {
  write_file_bytes(path, encode_entries(to_entries(model, opt)));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return from_entries(decode_entries(read_file_bytes(path)));
}

}  // namespace lscl

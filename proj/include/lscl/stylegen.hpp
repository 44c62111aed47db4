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
#include <array>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lscl/error.hpp"
#include "lscl/label_map.hpp"
#include "lscl/tensor.hpp"

namespace lscl {

// Intensity model of one synthetic scanner vendor.
struct VendorStyle {
  std::string name;
  std::array<double, 4> class_intensity{};  // BG, LV, MYO, RV
  double gamma = 1.0;
  double noise_sigma = 0.0;
  double bias_amplitude = 0.0;

  void validate() const {
    for (double v : class_intensity) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("vendor " + name + ": intensity outside [0,1]");
    }
    if (!(gamma > 0.0)) throw InvalidArgument("vendor " + name + ": gamma must be positive");
    if (!(noise_sigma >= 0.0) || !(bias_amplitude >= 0.0)) {
      throw InvalidArgument("vendor " + name + ": noise and bias amplitude must be non-negative");
    }
  }

  friend bool operator==(const VendorStyle&, const VendorStyle&) = default;
};

// A and B are the training vendors; C and D are held out.
inline std::vector<VendorStyle> default_vendor_styles() {
  return {
      {"A", {0.15, 0.80, 0.45, 0.70}, 1.0, 0.03, 0.05},
      {"B", {0.25, 0.70, 0.35, 0.60}, 0.8, 0.05, 0.10},
      {"C", {0.05, 0.95, 0.60, 0.85}, 1.4, 0.08, 0.15},
      {"D", {0.40, 0.55, 0.20, 0.75}, 0.6, 0.06, 0.20},
  };
}

inline const VendorStyle& find_style(const std::vector<VendorStyle>& styles,
                                     const std::string& name) {
  for (const auto& s : styles) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("unknown vendor " + name);
}

struct ContentGeometry {
  double cy = 0, cx = 0;  // LV / MYO centre
  double r_lv = 0, r_myo = 0;
  double rv_cy = 0, rv_cx = 0, r_rv = 0;
  int attempts = 0;
};

struct Content {
  LabelMap label;
  ContentGeometry geometry;
};

inline constexpr std::size_t kMinClassPixels = 20;
inline constexpr int kMaxContentAttempts = 50;

// Short-axis cartoon: LV disk, MYO annulus around it, RV crescent to the left.
inline Content gen_content(Rng& rng, std::size_t size = 64) {
  if (size < 16) throw InvalidArgument("gen_content: image size must be at least 16");
  const double s = static_cast<double>(size);
  for (int attempt = 1; attempt <= kMaxContentAttempts; ++attempt) {
    ContentGeometry g;
    g.attempts = attempt;
    g.r_lv = rng.uniform(6.0, 10.0);
    g.r_myo = g.r_lv + rng.uniform(3.0, 5.0);
    g.cy = rng.uniform(0.25 * s, 0.75 * s);
    g.cx = rng.uniform(0.25 * s, 0.75 * s);
    g.r_rv = rng.uniform(7.0, 11.0);
    g.rv_cy = g.cy;
    g.rv_cx = g.cx - rng.uniform(g.r_myo + 2.0, g.r_myo + 4.0);

    LabelMap label(size, size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double d = std::hypot(y - g.cy, x - g.cx);
        const double d_rv = std::hypot(y - g.rv_cy, x - g.rv_cx);
        std::uint8_t c = kBackground;
        if (d <= g.r_lv) {
          c = kLV;
        } else if (d <= g.r_myo) {
          c = kMYO;
        } else if (d_rv <= g.r_rv) {
          c = kRV;
        }
        label.at(y, x) = c;
      }
    if (label.count(kLV) >= kMinClassPixels && label.count(kMYO) >= kMinClassPixels &&
        label.count(kRV) >= kMinClassPixels && label.count(kBackground) > 0) {
      return {std::move(label), g};
    }
  }
  throw Error("gen_content: no valid label map after " + std::to_string(kMaxContentAttempts) +
              " attempts");
}

// Smooth field in [-1, 1]: bilinear interpolation of a clipped 4x4 Gaussian grid.
inline std::vector<double> bias_field(Rng& rng, std::size_t h, std::size_t w) {
  std::array<double, 16> grid{};
  for (double& g : grid) g = std::clamp(rng.normal(), -1.0, 1.0);
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double gy = h > 1 ? 3.0 * static_cast<double>(y) / static_cast<double>(h - 1) : 0.0;
    const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), 2);
    const double fy = gy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double gx = w > 1 ? 3.0 * static_cast<double>(x) / static_cast<double>(w - 1) : 0.0;
      const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), 2);
      const double fx = gx - static_cast<double>(x0);
      const double top = grid[y0 * 4 + x0] * (1 - fx) + grid[y0 * 4 + x0 + 1] * fx;
      const double bot = grid[(y0 + 1) * 4 + x0] * (1 - fx) + grid[(y0 + 1) * 4 + x0 + 1] * fx;
      out[y * w + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

// Renders a label map as a 1 x h x w image in [0, 1]:
// intensity lookup, multiplicative bias field, gamma, additive noise, clamp.
inline Tensor render_vendor(const LabelMap& label, const VendorStyle& style, Rng& rng) {
  style.validate();
  label.validate(kNumClasses);
  const std::size_t h = label.height, w = label.width;
  const std::vector<double> bias = bias_field(rng, h, w);
  Tensor img({1, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    double v = style.class_intensity[label.data[i]];
    v *= 1.0 + style.bias_amplitude * bias[i];
    if (style.gamma != 1.0) v = std::pow(std::max(v, 0.0), style.gamma);
    if (style.noise_sigma > 0.0) v += style.noise_sigma * rng.normal();
    img[i] = std::clamp(v, 0.0, 1.0);
  }
  return img;
}

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

// Population mean and standard deviation.
inline Moments moments(const Tensor& t) {
  const double mu = t.mean();
  double ss = 0.0;
  for (double v : t.data()) ss += (v - mu) * (v - mu);
  return {mu, std::sqrt(ss / static_cast<double>(t.size()))};
}

inline constexpr double kDegenerateStd = 1e-6;

// Affine map matching the global mean/std of `content` to those of `style`,
// before clamping.
inline Tensor moment_transfer_unclamped(const Tensor& content, const Tensor& style) {
  const Moments mc = moments(content);
  const Moments ms = moments(style);
  if (mc.stddev <= kDegenerateStd) throw InvalidArgument("degenerate content: std <= 1e-6");
  Tensor z(content.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = (content[i] - mc.mean) / mc.stddev * ms.stddev + ms.mean;
  }
  return z;
}

// Style transfer S(x_c, x_s) by global moment matching, clamped to [0, 1].
inline Tensor moment_style_transfer(const Tensor& content, const Tensor& style) {
  Tensor z = moment_transfer_unclamped(content, style);
  for (double& v : z.data()) v = std::clamp(v, 0.0, 1.0);
  return z;
}

// ---------------------------------------------------------------------------
// Datasets

struct Sample {
  Tensor image;  // 1 x h x w
  LabelMap label;
  std::string vendor;
  std::uint64_t seed = 0;
};

inline Sample rot90(const Sample& s, int turns) {
  Sample out = s;
  out.image = rot90(s.image, turns);
  out.label = rot90(s.label, turns);
  return out;
}

struct Dataset {
  std::string split;  // train | style-pool | test-A .. test-D
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

struct DatasetSpec {
  std::size_t image_size = 64;
  std::size_t train_per_vendor = 100;
  std::vector<std::string> train_vendors = {"A", "B"};
  std::size_t style_pool_size = 200;
  std::size_t test_per_vendor = 50;
  std::vector<std::string> test_vendors = {"A", "B", "C", "D"};
  std::uint64_t seed = 1;
  std::vector<VendorStyle> styles = default_vendor_styles();
};

struct Datasets {
  Dataset train;
  Dataset style_pool;
  std::vector<Dataset> test;  // one per test vendor
};

// 8-bit grid so that datasets survive a PGM round trip bit-exactly.
inline void quantize_to_u8_grid(Tensor& img) {
  for (double& v : img.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

inline Sample make_sample(const VendorStyle& style, std::uint64_t sample_seed, std::size_t size) {
  Rng rng(sample_seed);
  Content content = gen_content(rng, size);
  Tensor img = render_vendor(content.label, style, rng);
  quantize_to_u8_grid(img);
  return Sample{std::move(img), std::move(content.label), style.name, sample_seed};
}

// Each split owns a child stream of `spec.seed`; each sample owns a child of
// its split, so content depends only on (split, seed, index).
inline Datasets make_dataset(const DatasetSpec& spec) {
  if (spec.train_vendors.empty()) throw InvalidArgument("make_dataset: no training vendors");
  auto split_seed = [&](std::uint64_t split_index) {
    return Rng::derive(spec.seed, split_index).next_u64();
  };
  auto sample_seed = [](std::uint64_t split, std::uint64_t index) {
    return Rng::derive(split, index).next_u64();
  };

  Datasets out;
  out.train.split = "train";
  const std::uint64_t train_seed = split_seed(0);
  std::uint64_t idx = 0;
  for (const auto& v : spec.train_vendors) {
    const VendorStyle& style = find_style(spec.styles, v);
    for (std::size_t i = 0; i < spec.train_per_vendor; ++i, ++idx) {
      out.train.samples.push_back(make_sample(style, sample_seed(train_seed, idx), spec.image_size));
    }
  }

  out.style_pool.split = "style-pool";
  const std::uint64_t pool_seed = split_seed(1);
  for (std::size_t i = 0; i < spec.style_pool_size; ++i) {
    const VendorStyle& style = find_style(spec.styles, spec.train_vendors[i % spec.train_vendors.size()]);
    out.style_pool.samples.push_back(make_sample(style, sample_seed(pool_seed, i), spec.image_size));
  }

  for (std::size_t t = 0; t < spec.test_vendors.size(); ++t) {
    Dataset ds;
    ds.split = "test-" + spec.test_vendors[t];
    const VendorStyle& style = find_style(spec.styles, spec.test_vendors[t]);
    const std::uint64_t test_seed = split_seed(2 + t);
    for (std::size_t i = 0; i < spec.test_per_vendor; ++i) {
      ds.samples.push_back(make_sample(style, sample_seed(test_seed, i), spec.image_size));
    }
    out.test.push_back(std::move(ds));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PGM files and dataset directories

inline std::string encode_pgm(const std::vector<std::uint8_t>& pixels, std::size_t h,
                              std::size_t w) {
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.append(pixels.begin(), pixels.end());
  return out;
}

struct PgmImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

inline PgmImage decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") throw FormatError("PGM: expected P5 magic");
  PgmImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw FormatError("PGM: only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw FormatError("PGM: malformed header");
  }
  ++pos;  // single whitespace after maxval
  if (bytes.size() < pos + img.width * img.height) throw FormatError("PGM: truncated pixel data");
  img.pixels.assign(bytes.begin() + static_cast<long>(pos),
                    bytes.begin() + static_cast<long>(pos + img.width * img.height));
  return img;
}

inline std::vector<std::uint8_t> image_to_u8(const Tensor& img) {
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string sample_stem(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return buf;
}

// <dir>/<split>/NNNN_image.pgm, NNNN_label.pgm and index.csv (filename,vendor,seed).
inline void write_dataset(const Dataset& ds, const std::filesystem::path& root) {
  const auto dir = root / ds.split;
  std::filesystem::create_directories(dir);
  std::string index = "filename,vendor,seed\n";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    const std::size_t h = s.label.height, w = s.label.width;
    const std::string stem = sample_stem(i);
    write_text_file(dir / (stem + "_image.pgm"), encode_pgm(image_to_u8(s.image), h, w));
    write_text_file(dir / (stem + "_label.pgm"), encode_pgm(s.label.data, h, w));
    index += stem + "_image.pgm," + s.vendor + "," + std::to_string(s.seed) + "\n";
  }
  write_text_file(dir / "index.csv", index);
}

inline Dataset read_dataset(const std::filesystem::path& root, const std::string& split) {
  const auto dir = root / split;
  if (!std::filesystem::exists(dir / "index.csv")) {
    throw MissingInputError("dataset split not found: " + (dir / "index.csv").string());
  }
  std::istringstream index(read_text_file(dir / "index.csv"));
  std::string line;
  std::getline(index, line);
  if (line != "filename,vendor,seed") throw FormatError("bad index.csv header in " + dir.string());
  Dataset ds;
  ds.split = split;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw FormatError("bad index.csv row: " + line);
    }
    const std::string file = line.substr(0, c1);
    const std::string suffix = "_image.pgm";
    if (file.size() <= suffix.size() || file.compare(file.size() - suffix.size(), suffix.size(), suffix)) {
      throw FormatError("index.csv filename must end in _image.pgm: " + file);
    }
    const std::string label_file = file.substr(0, file.size() - suffix.size()) + "_label.pgm";
    const PgmImage img = decode_pgm(read_text_file(dir / file));
    const PgmImage lab = decode_pgm(read_text_file(dir / label_file));
    if (img.height != lab.height || img.width != lab.width) {
      throw FormatError("image and label sizes differ for " + file);
    }
    Sample s;
    s.image = Tensor({1, img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) s.image[i] = img.pixels[i] / 255.0;
    s.label = LabelMap(lab.height, lab.width);
    s.label.data = lab.pixels;
    s.label.validate(kNumClasses);
    s.vendor = line.substr(c1 + 1, c2 - c1 - 1);
    s.seed = std::stoull(line.substr(c2 + 1));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace lscl

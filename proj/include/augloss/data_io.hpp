// Copyright 2026 The AugLoss Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "augloss/error.hpp"
#include "augloss/image.hpp"
#include "augloss/label_noise.hpp"
#include "augloss/random.hpp"

namespace augloss {

/// Images of one shape with a label each.
struct LabeledImageDataset {
  std::vector<ImageTensor> images;
  LabelSet labels;
  std::vector<std::string> class_names;

  LabeledImageDataset() = default;
  LabeledImageDataset(std::vector<ImageTensor> imgs, LabelSet lbls, std::vector<std::string> names = {})
      : images(std::move(imgs)), labels(std::move(lbls)), class_names(std::move(names)) {
    detail::require(images.size() == labels.size(), "dataset has different numbers of images and labels");
    for (const auto& im : images) detail::require(im.same_shape(images.front()), "dataset images differ in shape");
  }

  std::size_t size() const noexcept { return images.size(); }
  std::size_t classes() const noexcept { return labels.k; }
  std::size_t feature_dim() const { return images.empty() ? 0 : images.front().size(); }

  LabeledImageDataset with_labels(LabelSet l) const { return LabeledImageDataset(images, std::move(l), class_names); }
};

// --- CIFAR-10 binary -------------------------------------------------------

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;

/// Parses concatenated 3073-byte records (label byte, then planar R, G, B).
/// ParseError::location() is a byte offset into `bytes`.
inline void parse_cifar10_binary(const std::vector<unsigned char>& bytes, std::vector<ImageTensor>& images,
                                 std::vector<std::size_t>& labels, const std::string& name = "<buffer>") {
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t offset = bytes.size() / kCifarRecord * kCifarRecord;
    throw ParseError(name + ": truncated record at byte offset " + std::to_string(offset) + " (size " +
                         std::to_string(bytes.size()) + " is not a multiple of 3073)",
                     offset);
  }
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
    const unsigned label = bytes[off];
    if (label > 9)
      throw ParseError(name + ": label byte " + std::to_string(label) + " > 9 at byte offset " + std::to_string(off), off);
    std::vector<double> data(3 * kCifarPlane);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t p = 0; p < kCifarPlane; ++p) data[p * 3 + ch] = bytes[off + 1 + ch * kCifarPlane + p] / 255.0;
    images.emplace_back(kCifarSide, kCifarSide, 3, std::move(data));
    labels.push_back(label);
  }
}

inline std::vector<std::string> cifar10_class_names() { return {kCifar10Classes.begin(), kCifar10Classes.end()}; }

inline LabeledImageDataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths) {
  std::vector<ImageTensor> images;
  std::vector<std::size_t> labels;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string(), 0);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    parse_cifar10_binary(bytes, images, labels, path.string());
  }
  return LabeledImageDataset(std::move(images), LabelSet(std::move(labels), 10), cifar10_class_names());
}

inline std::vector<unsigned char> encode_cifar10_binary(const LabeledImageDataset& ds) {
  std::vector<unsigned char> bytes;
  bytes.reserve(ds.size() * kCifarRecord);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const ImageTensor& im = ds.images[n];
    detail::require(im.height() == kCifarSide && im.width() == kCifarSide && im.channels() == 3,
                    "CIFAR-10 records must be 32x32x3");
    detail::require(ds.labels[n] <= 9, "CIFAR-10 labels must be < 10");
    bytes.push_back(static_cast<unsigned char>(ds.labels[n]));
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t p = 0; p < kCifarPlane; ++p) bytes.push_back(to_byte(im.data()[p * 3 + ch]));
  }
  return bytes;
}

inline void write_cifar10_binary(const LabeledImageDataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_cifar10_binary(ds);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// --- synthetic glyphs ------------------------------------------------------

struct SynthOptions {
  std::size_t k = 10;
  std::size_t n_per_class = 100;
  std::size_t side = 16;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
  std::size_t channels = 3;
  int max_offset = 2;  // glyphs are shifted by up to this many pixels per axis
};

inline constexpr std::size_t kSynthTemplateCount = 10;
inline constexpr std::array<double, 3> kSynthForeground{0.9, 0.85, 0.3};
inline constexpr std::array<double, 3> kSynthBackground{0.15, 0.2, 0.45};

inline std::vector<std::string> synth_class_names() {
  return {"hbar", "vbar", "plus", "cross", "ring", "square", "checker", "triangle", "corner", "stripes"};
}

/// Glyph coverage (0 or 1) of class `cls` at pixel-centre coordinates (u, v) in [0,1]^2, u horizontal.
inline bool synth_glyph(std::size_t cls, double u, double v) {
  const double du = u - 0.5;
  const double dv = v - 0.5;
  const bool inner = u > 0.15 && u < 0.85 && v > 0.15 && v < 0.85;
  switch (cls) {
    case 0: return std::abs(dv) < 0.12 && inner;
    case 1: return std::abs(du) < 0.12 && inner;
    case 2: return (std::abs(dv) < 0.1 || std::abs(du) < 0.1) && inner;
    case 3: return (std::abs(u - v) < 0.1 || std::abs(u + v - 1.0) < 0.1) && inner;
    case 4: {
      const double r = std::hypot(du, dv);
      return r > 0.2 && r < 0.36;
    }
    case 5: return std::abs(du) < 0.25 && std::abs(dv) < 0.25;
    case 6: return ((static_cast<int>(std::floor(u * 4)) + static_cast<int>(std::floor(v * 4))) % 2) == 0;
    case 7: return v > 0.2 && v < 0.8 && std::abs(du) < (v - 0.2) * 0.55;
    case 8: return inner && (u < 0.35 || v > 0.65);
    case 9: return (static_cast<int>(std::floor((u - v + 1.0) * 3.0)) % 2) == 0;
    default: return false;
  }
}

/// Renders class `cls` shifted by (dr, dc) pixels; vacated pixels show background.
inline ImageTensor synth_template(std::size_t cls, std::size_t side, std::size_t channels = 3, int dr = 0, int dc = 0) {
  detail::require(cls < kSynthTemplateCount, "synthetic class beyond template count");
  ImageTensor out(side, side, channels);
  const auto s = static_cast<double>(side);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const long sr = static_cast<long>(r) - dr;
      const long sc = static_cast<long>(c) - dc;
      const bool fg = sr >= 0 && sc >= 0 && sr < static_cast<long>(side) && sc < static_cast<long>(side) &&
                      synth_glyph(cls, (static_cast<double>(sc) + 0.5) / s, (static_cast<double>(sr) + 0.5) / s);
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t tone = channels == 3 ? ch : 1;
        out(r, c, ch) = fg ? kSynthForeground[tone] : kSynthBackground[tone];
      }
    }
  return out;
}

/// Balanced glyph dataset; example i has class i mod k.
inline LabeledImageDataset synth_shapes(const SynthOptions& opt) {
  detail::require(opt.k >= 2, "synthetic dataset needs k >= 2");
  detail::require(opt.k <= kSynthTemplateCount, "synthetic dataset supports at most 10 classes");
  detail::require(opt.side >= 4, "synthetic images need side >= 4");
  detail::require(opt.noise_sd >= 0.0 && opt.max_offset >= 0, "noise_sd and max_offset must be >= 0");
  Rng rng = make_rng(opt.seed);
  std::uniform_int_distribution<int> offset(-opt.max_offset, opt.max_offset);
  std::normal_distribution<double> noise(0.0, opt.noise_sd > 0.0 ? opt.noise_sd : 1.0);
  const std::size_t n = opt.k * opt.n_per_class;
  std::vector<ImageTensor> images;
  std::vector<std::size_t> labels;
  images.reserve(n);
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % opt.k;
    const int dr = offset(rng);
    const int dc = offset(rng);
    ImageTensor im = synth_template(cls, opt.side, opt.channels, dr, dc);
    if (opt.noise_sd > 0.0)
      for (double& v : im.mutable_data()) v = std::clamp(v + noise(rng), 0.0, 1.0);
    images.push_back(std::move(im));
    labels.push_back(cls);
  }
  auto names = synth_class_names();
  names.resize(opt.k);
  return LabeledImageDataset(std::move(images), LabelSet(std::move(labels), opt.k), std::move(names));
}

inline LabeledImageDataset subset(const LabeledImageDataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<ImageTensor> images;
  std::vector<std::size_t> labels;
  images.reserve(idx.size());
  labels.reserve(idx.size());
  for (std::size_t i : idx) {
    images.push_back(ds.images.at(i));
    labels.push_back(ds.labels[i]);
  }
  return LabeledImageDataset(std::move(images), LabelSet(std::move(labels), ds.classes()), ds.class_names);
}

/// Seeded shuffle, then the first round(fraction * N) examples form the train part.
inline std::pair<LabeledImageDataset, LabeledImageDataset> split(const LabeledImageDataset& ds, double train_fraction,
                                                                 std::uint64_t seed) {
  detail::require(train_fraction > 0.0 && train_fraction < 1.0, "train fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto cut = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  return {subset(ds, a), subset(ds, b)};
}

/// Writes `{label}/{index}.ppm` under `dir`.
inline void export_dataset(const LabeledImageDataset& ds, const std::filesystem::path& dir) {
  for (std::size_t i = 0; i < ds.size(); ++i)
    write_ppm(dir / std::to_string(ds.labels[i]) / (std::to_string(i) + ".ppm"), ds.images[i]);
}

}  // namespace augloss

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
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "augloss/error.hpp"
#include "augloss/image.hpp"
#include "augloss/random.hpp"

namespace augloss {

enum class CorruptionKind {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  GaussianBlur,
  BoxBlur,
  Pixelate,
  Contrast,
  Brightness,
  Saturate,
  ElasticShift,
};

inline constexpr std::array<CorruptionKind, 10> kAllCorruptions = {
    CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise, CorruptionKind::ImpulseNoise,
    CorruptionKind::GaussianBlur,  CorruptionKind::BoxBlur,   CorruptionKind::Pixelate,
    CorruptionKind::Contrast,      CorruptionKind::Brightness, CorruptionKind::Saturate,
    CorruptionKind::ElasticShift};

inline constexpr int kSeverityLevels = 5;

inline std::string_view to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::ShotNoise: return "shot_noise";
    case CorruptionKind::ImpulseNoise: return "impulse_noise";
    case CorruptionKind::GaussianBlur: return "gaussian_blur";
    case CorruptionKind::BoxBlur: return "box_blur";
    case CorruptionKind::Pixelate: return "pixelate";
    case CorruptionKind::Contrast: return "contrast";
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::Saturate: return "saturate";
    case CorruptionKind::ElasticShift: return "elastic_shift";
  }
  return "?";
}

inline CorruptionKind parse_corruption_kind(std::string_view name) {
  for (CorruptionKind k : kAllCorruptions)
    if (to_string(k) == name) return k;
  throw ArgumentError("unknown corruption kind '" + std::string(name) + "'");
}

inline bool is_stochastic(CorruptionKind k) {
  return k == CorruptionKind::GaussianNoise || k == CorruptionKind::ShotNoise || k == CorruptionKind::ImpulseNoise ||
         k == CorruptionKind::ElasticShift;
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 1;
};

/// Per-kind parameter for severities 1..5. These constants are this
/// library's own choices for 16-32 px images, not the published CIFAR-C values.
struct CorruptionTables {
  std::array<double, 5> gaussian_sigma{0.04, 0.06, 0.08, 0.09, 0.10};
  std::array<double, 5> shot_scale{0.002, 0.004, 0.01, 0.0133, 0.02};  // 1 / photon count
  std::array<double, 5> impulse_amount{0.01, 0.02, 0.03, 0.05, 0.07};
  std::array<double, 5> blur_sigma{0.4, 0.6, 0.7, 0.8, 1.0};
  std::array<double, 5> box_radius{0.5, 1.0, 1.5, 2.0, 2.5};
  std::array<double, 5> pixelate_block{2, 3, 4, 5, 6};
  std::array<double, 5> contrast_factor{0.75, 0.5, 0.4, 0.3, 0.15};
  std::array<double, 5> brightness_offset{0.1, 0.2, 0.3, 0.4, 0.5};
  std::array<double, 5> saturate_factor{0.7, 0.5, 0.3, 0.15, 0.0};
  std::array<double, 5> elastic_amplitude{0.5, 1.0, 1.5, 2.0, 2.5};  // pixels

  /// Tables whose every entry leaves the image unchanged.
  static CorruptionTables identity() {
    CorruptionTables t;
    t.gaussian_sigma.fill(0.0);
    t.shot_scale.fill(0.0);
    t.impulse_amount.fill(0.0);
    t.blur_sigma.fill(0.0);
    t.box_radius.fill(0.0);
    t.pixelate_block.fill(1.0);
    t.contrast_factor.fill(1.0);
    t.brightness_offset.fill(0.0);
    t.saturate_factor.fill(1.0);
    t.elastic_amplitude.fill(0.0);
    return t;
  }

  double parameter(CorruptionKind kind, int severity) const {
    detail::require(severity >= 1 && severity <= kSeverityLevels, "corruption severity must lie in [1, 5]");
    const auto i = static_cast<std::size_t>(severity - 1);
    switch (kind) {
      case CorruptionKind::GaussianNoise: return gaussian_sigma[i];
      case CorruptionKind::ShotNoise: return shot_scale[i];
      case CorruptionKind::ImpulseNoise: return impulse_amount[i];
      case CorruptionKind::GaussianBlur: return blur_sigma[i];
      case CorruptionKind::BoxBlur: return box_radius[i];
      case CorruptionKind::Pixelate: return pixelate_block[i];
      case CorruptionKind::Contrast: return contrast_factor[i];
      case CorruptionKind::Brightness: return brightness_offset[i];
      case CorruptionKind::Saturate: return saturate_factor[i];
      case CorruptionKind::ElasticShift: return elastic_amplitude[i];
    }
    throw ArgumentError("unknown corruption kind");
  }
};

// --- individual corruptions ------------------------------------------------

inline ImageTensor gaussian_noise(const ImageTensor& x, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return x;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  ImageTensor out = x;
  for (double& v : out.mutable_data()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  return out;
}

/// Poisson photon noise: x' = Poisson(x / scale) * scale.
inline ImageTensor shot_noise(const ImageTensor& x, double scale, std::uint64_t seed) {
  if (scale <= 0.0) return x;
  Rng rng = make_rng(seed);
  ImageTensor out = x;
  for (double& v : out.mutable_data()) {
    const double mean = v / scale;
    const double count = mean > 0.0 ? static_cast<double>(std::poisson_distribution<long>(mean)(rng)) : 0.0;
    v = std::clamp(count * scale, 0.0, 1.0);
  }
  return out;
}

/// Salt-and-pepper noise on a fraction `amount` of values.
inline ImageTensor impulse_noise(const ImageTensor& x, double amount, std::uint64_t seed) {
  if (amount <= 0.0) return x;
  Rng rng = make_rng(seed);
  ImageTensor out = x;
  for (double& v : out.mutable_data()) {
    const double u = uniform01(rng);
    if (u < amount / 2.0)
      v = 0.0;
    else if (u < amount)
      v = 1.0;
  }
  return out;
}

namespace detail {

/// Separable convolution with a symmetric kernel and replicated borders.
inline ImageTensor convolve_separable(const ImageTensor& x, const std::vector<double>& kernel) {
  const long radius = static_cast<long>(kernel.size() / 2);
  const long h = static_cast<long>(x.height());
  const long w = static_cast<long>(x.width());
  const std::size_t ch = x.channels();
  std::vector<double> tmp(x.size(), 0.0);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      for (std::size_t k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (long d = -radius; d <= radius; ++d) {
          const long cc = std::clamp(c + d, 0L, w - 1);
          acc += kernel[static_cast<std::size_t>(d + radius)] * x(static_cast<std::size_t>(r), static_cast<std::size_t>(cc), k);
        }
        tmp[(static_cast<std::size_t>(r) * x.width() + static_cast<std::size_t>(c)) * ch + k] = acc;
      }
  std::vector<double> out(x.size(), 0.0);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      for (std::size_t k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (long d = -radius; d <= radius; ++d) {
          const long rr = std::clamp(r + d, 0L, h - 1);
          acc += kernel[static_cast<std::size_t>(d + radius)] *
                 tmp[(static_cast<std::size_t>(rr) * x.width() + static_cast<std::size_t>(c)) * ch + k];
        }
        out[(static_cast<std::size_t>(r) * x.width() + static_cast<std::size_t>(c)) * ch + k] = std::clamp(acc, 0.0, 1.0);
      }
  return ImageTensor(x.height(), x.width(), x.channels(), std::move(out));
}

/// Bilinear sample with coordinates clamped to the raster.
inline double sample_clamped(const ImageTensor& x, double r, double c, std::size_t ch) {
  r = std::clamp(r, 0.0, static_cast<double>(x.height() - 1));
  c = std::clamp(c, 0.0, static_cast<double>(x.width() - 1));
  const auto r0 = static_cast<std::size_t>(std::floor(r));
  const auto c0 = static_cast<std::size_t>(std::floor(c));
  const std::size_t r1 = std::min(r0 + 1, x.height() - 1);
  const std::size_t c1 = std::min(c0 + 1, x.width() - 1);
  const double dr = r - static_cast<double>(r0);
  const double dc = c - static_cast<double>(c0);
  return (1 - dr) * ((1 - dc) * x(r0, c0, ch) + dc * x(r0, c1, ch)) + dr * ((1 - dc) * x(r1, c0, ch) + dc * x(r1, c1, ch));
}

}  // namespace detail

inline ImageTensor gaussian_blur(const ImageTensor& x, double sigma) {
  if (sigma <= 0.0) return x;
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    sum += (kernel[i] = std::exp(-d * d / (2.0 * sigma * sigma)));
  }
  for (double& v : kernel) v /= sum;
  return detail::convolve_separable(x, kernel);
}

/// Box filter of fractional radius: the outermost taps get weight frac(radius).
inline ImageTensor box_blur(const ImageTensor& x, double radius) {
  if (radius <= 0.0) return x;
  const auto whole = static_cast<std::size_t>(std::ceil(radius));
  std::vector<double> kernel(2 * whole + 1, 1.0);
  const double edge = radius - std::floor(radius);
  if (edge > 0.0) kernel.front() = kernel.back() = edge;
  double sum = 0.0;
  for (double v : kernel) sum += v;
  for (double& v : kernel) v /= sum;
  return detail::convolve_separable(x, kernel);
}

/// Replaces each block x block tile (anchored top-left) by its mean.
inline ImageTensor pixelate(const ImageTensor& x, std::size_t block) {
  detail::require(block >= 1, "pixelate block must be >= 1");
  if (block == 1) return x;
  ImageTensor out = x;
  for (std::size_t r0 = 0; r0 < x.height(); r0 += block)
    for (std::size_t c0 = 0; c0 < x.width(); c0 += block) {
      const std::size_t r1 = std::min(r0 + block, x.height());
      const std::size_t c1 = std::min(c0 + block, x.width());
      for (std::size_t k = 0; k < x.channels(); ++k) {
        double sum = 0.0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) sum += x(r, c, k);
        const double mean = sum / static_cast<double>((r1 - r0) * (c1 - c0));
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) out(r, c, k) = mean;
      }
    }
  return out;
}

/// Pulls values toward the per-channel mean; factor 1 is the identity.
inline ImageTensor contrast(const ImageTensor& x, double factor) {
  ImageTensor out = x;
  for (std::size_t k = 0; k < x.channels(); ++k) {
    double mean = 0.0;
    for (std::size_t i = k; i < x.size(); i += x.channels()) mean += x.data()[i];
    mean /= static_cast<double>(x.size() / x.channels());
    for (std::size_t i = k; i < x.size(); i += x.channels())
      out.mutable_data()[i] = std::clamp((x.data()[i] - mean) * factor + mean, 0.0, 1.0);
  }
  return out;
}

inline ImageTensor brightness(const ImageTensor& x, double offset) {
  ImageTensor out = x;
  for (double& v : out.mutable_data()) v = std::clamp(v + offset, 0.0, 1.0);
  return out;
}

/// Scales chroma around the per-pixel luma; factor 1 is the identity, 0 is grayscale.
inline ImageTensor saturate(const ImageTensor& x, double factor) {
  if (x.channels() == 1) return x;
  ImageTensor out = x;
  for (std::size_t r = 0; r < x.height(); ++r)
    for (std::size_t c = 0; c < x.width(); ++c) {
      const double luma = 0.299 * x(r, c, 0) + 0.587 * x(r, c, 1) + 0.114 * x(r, c, 2);
      for (std::size_t k = 0; k < 3; ++k) out(r, c, k) = std::clamp(luma + factor * (x(r, c, k) - luma), 0.0, 1.0);
    }
  return out;
}

/// Smooth random displacement field (three low-frequency plane waves per axis)
/// with peak displacement `amplitude` pixels.
inline ImageTensor elastic_shift(const ImageTensor& x, double amplitude, std::uint64_t seed) {
  if (amplitude <= 0.0) return x;
  Rng rng = make_rng(seed);
  struct Wave {
    double fr, fc, phase, weight;
  };
  auto draw_field = [&]() {
    std::array<Wave, 3> waves{};
    double total = 0.0;
    for (auto& wv : waves) {
      wv.fr = std::uniform_real_distribution<double>(-1.5, 1.5)(rng);
      wv.fc = std::uniform_real_distribution<double>(-1.5, 1.5)(rng);
      wv.phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      total += (wv.weight = std::uniform_real_distribution<double>(0.5, 1.0)(rng));
    }
    for (auto& wv : waves) wv.weight /= total;
    return waves;
  };
  const auto field_r = draw_field();
  const auto field_c = draw_field();
  auto eval = [&](const std::array<Wave, 3>& waves, double r, double c) {
    double v = 0.0;
    for (const auto& wv : waves)
      v += wv.weight * std::sin(2.0 * std::numbers::pi *
                                    (wv.fr * r / static_cast<double>(x.height()) + wv.fc * c / static_cast<double>(x.width())) +
                                wv.phase);
    return amplitude * v;
  };
  ImageTensor out = x;
  for (std::size_t r = 0; r < x.height(); ++r)
    for (std::size_t c = 0; c < x.width(); ++c) {
      const double rd = static_cast<double>(r);
      const double cd = static_cast<double>(c);
      const double sr = rd + eval(field_r, rd, cd);
      const double sc = cd + eval(field_c, rd, cd);
      for (std::size_t k = 0; k < x.channels(); ++k) out(r, c, k) = std::clamp(detail::sample_clamped(x, sr, sc, k), 0.0, 1.0);
    }
  return out;
}

/// Applies one corruption at one severity. Deterministic kinds ignore the seed.
inline ImageTensor corrupt(const ImageTensor& x, const CorruptionSpec& spec, std::uint64_t seed,
                           const CorruptionTables& tables = {}) {
  const double p = tables.parameter(spec.kind, spec.severity);
  switch (spec.kind) {
    case CorruptionKind::GaussianNoise: return gaussian_noise(x, p, seed);
    case CorruptionKind::ShotNoise: return shot_noise(x, p, seed);
    case CorruptionKind::ImpulseNoise: return impulse_noise(x, p, seed);
    case CorruptionKind::GaussianBlur: return gaussian_blur(x, p);
    case CorruptionKind::BoxBlur: return box_blur(x, p);
    case CorruptionKind::Pixelate: return pixelate(x, static_cast<std::size_t>(std::lround(std::max(p, 1.0))));
    case CorruptionKind::Contrast: return contrast(x, p);
    case CorruptionKind::Brightness: return brightness(x, p);
    case CorruptionKind::Saturate: return saturate(x, p);
    case CorruptionKind::ElasticShift: return elastic_shift(x, p, seed);
  }
  throw ArgumentError("unknown corruption kind");
}

/// For each kind, one corrupted copy of the test images per severity 1..5.
struct CorruptedSuite {
  std::vector<CorruptionKind> kinds;
  std::vector<std::array<std::vector<ImageTensor>, kSeverityLevels>> sets;  // parallel to kinds

  std::size_t set_count() const noexcept { return kinds.size() * kSeverityLevels; }
  const std::vector<ImageTensor>& at(std::size_t kind_index, int severity) const {
    return sets.at(kind_index).at(static_cast<std::size_t>(severity - 1));
  }
};

inline std::uint64_t corruption_seed(std::uint64_t seed, CorruptionKind kind, int severity, std::size_t index) {
  return derive_seed(seed, {static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(severity), index});
}

inline CorruptedSuite build_corrupted_suite(const std::vector<ImageTensor>& images, const std::vector<CorruptionKind>& kinds,
                                            std::uint64_t seed, const CorruptionTables& tables = {}) {
  detail::require(!images.empty(), "corrupted suite needs at least one image");
  detail::require(!kinds.empty(), "corrupted suite needs at least one kind");
  CorruptedSuite suite;
  suite.kinds = kinds;
  suite.sets.resize(kinds.size());
  for (std::size_t k = 0; k < kinds.size(); ++k)
    for (int s = 1; s <= kSeverityLevels; ++s) {
      auto& set = suite.sets[k][static_cast<std::size_t>(s - 1)];
      set.reserve(images.size());
      for (std::size_t i = 0; i < images.size(); ++i)
        set.push_back(corrupt(images[i], {kinds[k], s}, corruption_seed(seed, kinds[k], s, i), tables));
    }
  return suite;
}

/// Writes `{kind}/{severity}/{index}.ppm` under `dir`.
inline void export_suite(const CorruptedSuite& suite, const std::filesystem::path& dir) {
  for (std::size_t k = 0; k < suite.kinds.size(); ++k)
    for (int s = 1; s <= kSeverityLevels; ++s) {
      const auto& set = suite.at(k, s);
      for (std::size_t i = 0; i < set.size(); ++i)
        write_ppm(dir / std::string(to_string(suite.kinds[k])) / std::to_string(s) / (std::to_string(i) + ".ppm"), set[i]);
    }
}

}  // namespace augloss

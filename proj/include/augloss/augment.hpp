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
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "augloss/error.hpp"
#include "augloss/image.hpp"
#include "augloss/random.hpp"

namespace augloss {

/// Train-time operations. Contrast, color, brightness and sharpness are
/// deliberately absent: they overlap with the test-time corruptions.
enum class AugmentOp { AutoContrast, Equalize, Posterize, Rotate, Solarize, ShearX, ShearY, TranslateX, TranslateY };

inline constexpr std::array<AugmentOp, 9> kAllAugmentOps = {
    AugmentOp::AutoContrast, AugmentOp::Equalize, AugmentOp::Posterize, AugmentOp::Rotate,    AugmentOp::Solarize,
    AugmentOp::ShearX,       AugmentOp::ShearY,   AugmentOp::TranslateX, AugmentOp::TranslateY};

inline std::string_view to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::AutoContrast: return "autocontrast";
    case AugmentOp::Equalize: return "equalize";
    case AugmentOp::Posterize: return "posterize";
    case AugmentOp::Rotate: return "rotate";
    case AugmentOp::Solarize: return "solarize";
    case AugmentOp::ShearX: return "shear_x";
    case AugmentOp::ShearY: return "shear_y";
    case AugmentOp::TranslateX: return "translate_x";
    case AugmentOp::TranslateY: return "translate_y";
  }
  return "?";
}

inline AugmentOp parse_augment_op(std::string_view name) {
  for (AugmentOp op : kAllAugmentOps)
    if (to_string(op) == name) return op;
  throw ArgumentError("unknown augmentation op '" + std::string(name) + "'");
}

struct AugmentPolicy {
  std::size_t width = 3;  // number of chains
  std::size_t depth_min = 1;
  std::size_t depth_max = 3;
  int severity = 3;  // 0 disables every magnitude-dependent op
  std::vector<AugmentOp> ops{kAllAugmentOps.begin(), kAllAugmentOps.end()};
  double dirichlet_alpha = 1.0;
  std::pair<double, double> skip_beta{1.0, 1.0};

  void validate() const {
    detail::require(width >= 1, "augmentation width must be >= 1");
    detail::require(depth_min >= 1 && depth_min <= depth_max, "need 1 <= depth_min <= depth_max");
    detail::require(severity >= 0 && severity <= 10, "severity must lie in [0, 10]");
    detail::require(!ops.empty(), "augmentation op set is empty");
    detail::require(dirichlet_alpha > 0.0, "dirichlet alpha must be positive");
    const auto [a, b] = skip_beta;
    detail::require(a >= 0.0 && b >= 0.0 && a + b > 0.0, "skip beta parameters must be >= 0 and not both 0");
  }
};

/// (x_orig, x_aug1, x_aug2); orig is the untouched input.
struct AugmentedTuple {
  ImageTensor orig;
  ImageTensor aug1;
  ImageTensor aug2;
};

// --- primitive operations --------------------------------------------------

inline ImageTensor autocontrast(const ImageTensor& x) {
  ImageTensor out = x;
  for (std::size_t ch = 0; ch < x.channels(); ++ch) {
    double lo = 1.0;
    double hi = 0.0;
    for (std::size_t i = ch; i < x.size(); i += x.channels()) {
      lo = std::min(lo, x.data()[i]);
      hi = std::max(hi, x.data()[i]);
    }
    if (hi <= lo) continue;
    for (std::size_t i = ch; i < x.size(); i += x.channels())
      out.mutable_data()[i] = (x.data()[i] - lo) / (hi - lo);
  }
  out.clip();
  return out;
}

/// Per-channel histogram equalization over 256 quantized levels.
inline ImageTensor equalize(const ImageTensor& x) {
  ImageTensor out = x;
  for (std::size_t ch = 0; ch < x.channels(); ++ch) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = ch; i < x.size(); i += x.channels()) ++hist[to_byte(x.data()[i])];
    std::size_t total = 0;
    std::size_t last = 0;
    for (std::size_t v = 0; v < 256; ++v) {
      total += hist[v];
      if (hist[v]) last = hist[v];
    }
    const std::size_t step = (total - last) / 255;
    if (step == 0) continue;
    std::array<double, 256> lut{};
    std::size_t n = step / 2;
    for (std::size_t v = 0; v < 256; ++v) {
      lut[v] = static_cast<double>(std::min<std::size_t>(n / step, 255)) / 255.0;
      n += hist[v];
    }
    for (std::size_t i = ch; i < x.size(); i += x.channels()) out.mutable_data()[i] = lut[to_byte(x.data()[i])];
  }
  return out;
}

/// Keeps the top `bits` bits of each 8-bit quantized value.
inline ImageTensor posterize(const ImageTensor& x, int bits) {
  detail::require(bits >= 1 && bits <= 8, "posterize bits must lie in [1, 8]");
  const unsigned mask = (0xFFu << (8 - bits)) & 0xFFu;
  ImageTensor out = x;
  for (double& v : out.mutable_data()) v = static_cast<double>(to_byte(v) & mask) / 255.0;
  return out;
}

/// Inverts every value strictly above `threshold`.
inline ImageTensor solarize(const ImageTensor& x, double threshold) {
  ImageTensor out = x;
  for (double& v : out.mutable_data())
    if (v > threshold) v = 1.0 - v;
  return out;
}

namespace detail {

inline constexpr double kFill = 0.5;

/// Bilinear resampling through an output->source coordinate map; samples that
/// fall outside the raster read the gray fill value.
template <typename SourceOf>
ImageTensor warp(const ImageTensor& x, SourceOf source_of) {
  ImageTensor out(x.height(), x.width(), x.channels(), kFill);
  const auto h = static_cast<long>(x.height());
  const auto w = static_cast<long>(x.width());
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      const auto [sr, sc] = source_of(static_cast<double>(r), static_cast<double>(c));
      const double fr = std::floor(sr);
      const double fc = std::floor(sc);
      const long r0 = static_cast<long>(fr);
      const long c0 = static_cast<long>(fc);
      const double dr = sr - fr;
      const double dc = sc - fc;
      for (std::size_t ch = 0; ch < x.channels(); ++ch) {
        auto px = [&](long rr, long cc) {
          if (rr < 0 || cc < 0 || rr >= h || cc >= w) return kFill;
          return x(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc), ch);
        };
        double v = (1 - dr) * (1 - dc) * px(r0, c0);
        if (dc != 0.0) v += (1 - dr) * dc * px(r0, c0 + 1);
        if (dr != 0.0) v += dr * (1 - dc) * px(r0 + 1, c0);
        if (dr != 0.0 && dc != 0.0) v += dr * dc * px(r0 + 1, c0 + 1);
        out(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

inline std::pair<double, double> centre(const ImageTensor& x) {
  return {(static_cast<double>(x.height()) - 1.0) / 2.0, (static_cast<double>(x.width()) - 1.0) / 2.0};
}

}  // namespace detail

/// Counter-clockwise rotation about the image centre.
inline ImageTensor rotate(const ImageTensor& x, double degrees) {
  const double t = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(t);
  const double sn = std::sin(t);
  const auto [cr, cc] = detail::centre(x);
  return detail::warp(x, [&](double r, double c) {
    const double dy = r - cr;
    const double dx = c - cc;
    return std::pair{cr + cs * dy - sn * dx, cc + sn * dy + cs * dx};
  });
}

inline ImageTensor shear_x(const ImageTensor& x, double shear) {
  const auto [cr, cc] = detail::centre(x);
  return detail::warp(x, [&](double r, double c) { return std::pair{r, c + shear * (r - cr)}; });
}

inline ImageTensor shear_y(const ImageTensor& x, double shear) {
  const auto [cr, cc] = detail::centre(x);
  return detail::warp(x, [&](double r, double c) { return std::pair{r + shear * (c - cc), c}; });
}

inline ImageTensor translate_x(const ImageTensor& x, double pixels) {
  return detail::warp(x, [&](double r, double c) { return std::pair{r, c - pixels}; });
}

inline ImageTensor translate_y(const ImageTensor& x, double pixels) {
  return detail::warp(x, [&](double r, double c) { return std::pair{r - pixels, c}; });
}

/// Applies one op at `magnitude` in [0, 1]. The seed only picks the direction
/// of signed ops. Magnitude 0 is the identity for every op except
/// autocontrast and equalize, which have no magnitude.
inline ImageTensor apply_op(const ImageTensor& x, AugmentOp op, double magnitude, std::uint64_t seed) {
  detail::require(magnitude >= 0.0 && magnitude <= 1.0, "op magnitude must lie in [0, 1]");
  Rng rng = make_rng(seed);
  const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  switch (op) {
    case AugmentOp::AutoContrast: return autocontrast(x);
    case AugmentOp::Equalize: return equalize(x);
    case AugmentOp::Posterize:
      if (magnitude == 0.0) return x;
      return posterize(x, std::max(1, 4 - static_cast<int>(std::floor(4.0 * magnitude))));
    case AugmentOp::Rotate: return rotate(x, sign * 30.0 * magnitude);
    case AugmentOp::Solarize: return solarize(x, 1.0 - magnitude);
    case AugmentOp::ShearX: return shear_x(x, sign * 0.3 * magnitude);
    case AugmentOp::ShearY: return shear_y(x, sign * 0.3 * magnitude);
    case AugmentOp::TranslateX: return translate_x(x, sign * magnitude * static_cast<double>(x.width()) / 3.0);
    case AugmentOp::TranslateY: return translate_y(x, sign * magnitude * static_cast<double>(x.height()) / 3.0);
  }
  throw ArgumentError("unknown augmentation op");
}

namespace detail {

inline double sample_gamma(Rng& rng, double shape) { return std::gamma_distribution<double>(shape, 1.0)(rng); }

inline double sample_beta(Rng& rng, double a, double b) {
  if (b == 0.0) return 1.0;
  if (a == 0.0) return 0.0;
  const double x = sample_gamma(rng, a);
  const double y = sample_gamma(rng, b);
  return (x + y) > 0.0 ? x / (x + y) : 0.5;
}

inline std::vector<double> sample_dirichlet(Rng& rng, double alpha, std::size_t n) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (double& v : w) sum += (v = sample_gamma(rng, alpha));
  for (double& v : w) v = sum > 0.0 ? v / sum : 1.0 / static_cast<double>(n);
  return w;
}

inline constexpr std::uint64_t kAug1Salt = 0x5A17C0DE0000A001ULL;
inline constexpr std::uint64_t kAug2Salt = 0x5A17C0DE0000A002ULL;

}  // namespace detail

/// A chain of depth ~ U{depth_min..depth_max} ops drawn with replacement.
/// Each op's magnitude is U(0.1, 1) * severity / 10.
inline ImageTensor augmix_chain(const ImageTensor& x, const AugmentPolicy& policy, std::uint64_t seed) {
  policy.validate();
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> depth_dist(policy.depth_min, policy.depth_max);
  std::uniform_int_distribution<std::size_t> op_dist(0, policy.ops.size() - 1);
  const std::size_t depth = depth_dist(rng);
  ImageTensor out = x;
  for (std::size_t d = 0; d < depth; ++d) {
    const AugmentOp op = policy.ops[op_dist(rng)];
    const double magnitude = std::uniform_real_distribution<double>(0.1, 1.0)(rng) * policy.severity / 10.0;
    out = apply_op(out, op, magnitude, rng());
  }
  return out;
}

/// m * x + (1 - m) * sum_i w_i * chain_i(x), w ~ Dirichlet, m ~ Beta.
inline ImageTensor augmix(const ImageTensor& x, const AugmentPolicy& policy, std::uint64_t seed) {
  policy.validate();
  Rng rng = make_rng(seed);
  const std::vector<double> w = detail::sample_dirichlet(rng, policy.dirichlet_alpha, policy.width);
  const double m = detail::sample_beta(rng, policy.skip_beta.first, policy.skip_beta.second);
  std::vector<double> mix(x.size(), 0.0);
  for (std::size_t i = 0; i < policy.width; ++i) {
    const ImageTensor chain = augmix_chain(x, policy, derive_seed(seed, {i}));
    for (std::size_t j = 0; j < mix.size(); ++j) mix[j] += w[i] * chain.data()[j];
  }
  for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = std::clamp(m * x.data()[j] + (1.0 - m) * mix[j], 0.0, 1.0);
  return ImageTensor(x.height(), x.width(), x.channels(), std::move(mix));
}

inline AugmentedTuple augment_tuple(const ImageTensor& x, const AugmentPolicy& policy, std::uint64_t seed) {
  return {x, augmix(x, policy, seed ^ detail::kAug1Salt), augmix(x, policy, seed ^ detail::kAug2Salt)};
}

/// Degenerate tuple (x, x, x); its consistency term is exactly zero.
inline AugmentedTuple noaug_tuple(const ImageTensor& x) { return {x, x, x}; }

}  // namespace augloss

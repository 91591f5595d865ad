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
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "augloss/error.hpp"

namespace augloss {

// Probabilities are clamped to [kProbFloor, kProbCeil] before any logarithm.
inline constexpr double kProbFloor = 1e-7;
inline constexpr double kProbCeil = 1.0 - 1e-7;
// Lower clamp for the Jensen-Shannon mixture distribution.
inline constexpr double kMixtureFloor = 1e-12;
// Width of the alpha == 1 branch that falls back to cross entropy.
inline constexpr double kAlphaOneBand = 1e-9;
// alpha-loss sentinel for the 0-1 loss limit.
inline constexpr double kAlphaInfinity = std::numeric_limits<double>::infinity();

/// Probability vector over K >= 2 classes. Validated on construction.
class Posterior {
 public:
  explicit Posterior(std::vector<double> probs) : probs_(std::move(probs)) {
    detail::require(probs_.size() >= 2, "posterior needs at least two classes");
    double sum = 0.0;
    for (double v : probs_) {
      detail::require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "posterior entry outside [0, 1]");
      sum += v;
    }
    detail::require(std::abs(sum - 1.0) <= 1e-9, "posterior entries do not sum to 1");
  }

  static Posterior uniform(std::size_t k) { return Posterior(std::vector<double>(k, 1.0 / static_cast<double>(k))); }

  static Posterior one_hot(std::size_t k, std::size_t y) {
    detail::require(y < k, "one-hot index out of range");
    std::vector<double> p(k, 0.0);
    p[y] = 1.0;
    return Posterior(std::move(p));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const Posterior&, const Posterior&) = default;

 private:
  std::vector<double> probs_;
};

/// The original-view posterior followed by the augmented-view posteriors.
class PosteriorTuple {
 public:
  PosteriorTuple(Posterior orig, std::vector<Posterior> augs) {
    members_.reserve(augs.size() + 1);
    members_.push_back(std::move(orig));
    for (auto& p : augs) {
      detail::require(p.size() == members_.front().size(), "posterior tuple members disagree on K");
      members_.push_back(std::move(p));
    }
  }

  const Posterior& orig() const noexcept { return members_.front(); }
  std::span<const Posterior> members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }
  std::size_t classes() const noexcept { return members_.front().size(); }

 private:
  std::vector<Posterior> members_;
};

enum class LossFamily { CE, Focal, NceRce, Alpha };

inline std::string_view to_string(LossFamily f) {
  switch (f) {
    case LossFamily::CE: return "ce";
    case LossFamily::Focal: return "focal";
    case LossFamily::NceRce: return "nce_rce";
    case LossFamily::Alpha: return "alpha";
  }
  return "?";
}

inline LossFamily parse_loss_family(std::string_view name) {
  if (name == "ce") return LossFamily::CE;
  if (name == "focal") return LossFamily::Focal;
  if (name == "nce_rce" || name == "nce+rce") return LossFamily::NceRce;
  if (name == "alpha") return LossFamily::Alpha;
  throw ArgumentError("unknown loss family '" + std::string(name) + "'");
}

/// Loss family plus hyperparameters. Only the fields of the active family
/// are read; `lambda` weights the consistency term for every family.
/// Defaults are the CIFAR-10 AugMix tunings.
struct LossSpec {
  LossFamily family = LossFamily::CE;
  double gamma = 5.0;
  double beta1 = 1.0;
  double beta2 = 0.1;
  double delta = 4.0;
  double alpha = 2.0;
  double lambda = 12.0;

  static LossSpec ce() { return {}; }
  static LossSpec focal(double gamma) {
    LossSpec s;
    s.family = LossFamily::Focal;
    s.gamma = gamma;
    return s;
  }
  static LossSpec nce_rce(double beta1, double beta2, double delta = 4.0) {
    LossSpec s;
    s.family = LossFamily::NceRce;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.delta = delta;
    return s;
  }
  static LossSpec alpha_loss(double alpha) {
    LossSpec s;
    s.family = LossFamily::Alpha;
    s.alpha = alpha;
    return s;
  }

  LossSpec with_lambda(double l) const {
    LossSpec s = *this;
    s.lambda = l;
    return s;
  }

  void validate() const {
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be a finite value >= 0");
    switch (family) {
      case LossFamily::CE: break;
      case LossFamily::Focal:
        detail::require(gamma >= 0.0 && gamma <= 5.0, "focal gamma must lie in [0, 5]");
        break;
      case LossFamily::NceRce:
        detail::require(beta1 > 0.0 && beta2 > 0.0, "NCE+RCE betas must be positive");
        detail::require(delta > 0.0, "RCE delta must be positive");
        break;
      case LossFamily::Alpha:
        detail::require(alpha > 0.0, "alpha must be positive");
        break;
    }
  }

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

/// Compact `key=value;...` rendering of the active hyperparameters.
inline std::string describe_hyperparams(const LossSpec& s) {
  auto fmt = [](double v) {
    if (std::isinf(v)) return std::string("inf");
    std::string out = std::to_string(v);
    out.erase(out.find_last_not_of('0') + 1);
    if (!out.empty() && out.back() == '.') out.pop_back();
    return out;
  };
  switch (s.family) {
    case LossFamily::CE: return "-";
    case LossFamily::Focal: return "gamma=" + fmt(s.gamma);
    case LossFamily::NceRce: return "beta1=" + fmt(s.beta1) + ";beta2=" + fmt(s.beta2) + ";delta=" + fmt(s.delta);
    case LossFamily::Alpha: return "alpha=" + fmt(s.alpha);
  }
  return "-";
}

namespace detail {

inline double clamp_prob(double p) { return std::clamp(p, kProbFloor, kProbCeil); }
inline bool prob_unclamped(double p) { return p > kProbFloor && p < kProbCeil; }

inline void check_index(std::size_t y, std::size_t k) {
  require(y < k, "class index " + std::to_string(y) + " out of range for K=" + std::to_string(k));
}

inline double ce(std::span<const double> p, std::size_t y) { return -std::log(clamp_prob(p[y])); }

inline double focal(std::span<const double> p, std::size_t y, double gamma) {
  if (gamma == 0.0) return ce(p, y);
  return std::pow(1.0 - p[y], gamma) * ce(p, y);
}

inline double nce(std::span<const double> p, std::size_t y) {
  double denom = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) denom += ce(p, j);
  return ce(p, y) / denom;
}

inline double rce(std::span<const double> p, std::size_t y, double delta) {
  double off = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (j != y) off += p[j];
  return delta * off;
}

inline double alpha(std::span<const double> p, std::size_t y, double a) {
  if (std::isinf(a)) return 1.0 - p[y];
  if (std::abs(a - 1.0) <= kAlphaOneBand) return ce(p, y);
  // 1 - c^(1-1/a) evaluated through expm1 to stay accurate near a == 1.
  const double e = 1.0 - 1.0 / a;
  return (a / (a - 1.0)) * -std::expm1(e * std::log(clamp_prob(p[y])));
}

inline double basic(const LossSpec& s, std::span<const double> p, std::size_t y) {
  switch (s.family) {
    case LossFamily::CE: return ce(p, y);
    case LossFamily::Focal: return focal(p, y, s.gamma);
    case LossFamily::NceRce: return s.beta1 * nce(p, y) + s.beta2 * rce(p, y, s.delta);
    case LossFamily::Alpha: return alpha(p, y, s.alpha);
  }
  return 0.0;
}

/// d(basic loss)/dp written into `grad` (overwritten).
inline void basic_prob_gradient(const LossSpec& s, std::span<const double> p, std::size_t y, std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double py = p[y];
  const bool live = prob_unclamped(py);
  switch (s.family) {
    case LossFamily::CE:
      if (live) grad[y] = -1.0 / py;
      break;
    case LossFamily::Focal: {
      const double q = 1.0 - py;
      double g = 0.0;
      if (s.gamma != 0.0 && q > 0.0) g += s.gamma * std::pow(q, s.gamma - 1.0) * std::log(clamp_prob(py));
      if (live) g -= std::pow(q, s.gamma) / py;
      grad[y] = g;
      break;
    }
    case LossFamily::NceRce: {
      double denom = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) denom += ce(p, j);
      const double num = ce(p, y);
      // Quotient rule: d(num/denom) = (dnum * denom - num * ddenom) / denom^2.
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double ddenom = prob_unclamped(p[j]) ? -1.0 / p[j] : 0.0;
        const double dnum = (j == y) ? ddenom : 0.0;
        grad[j] = s.beta1 * (dnum * denom - num * ddenom) / (denom * denom);
        if (j != y) grad[j] += s.beta2 * s.delta;
      }
      break;
    }
    case LossFamily::Alpha:
      if (std::isinf(s.alpha)) {
        grad[y] = -1.0;
      } else if (std::abs(s.alpha - 1.0) <= kAlphaOneBand) {
        if (live) grad[y] = -1.0 / py;
      } else if (live) {
        grad[y] = -std::pow(py, -1.0 / s.alpha);
      }
      break;
  }
}

inline double js(std::span<const std::span<const double>> members) {
  const std::size_t n = members.size();
  const std::size_t k = members.front().size();
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double m = 0.0;
    for (const auto& p : members) m += p[c];
    m = std::max(m / static_cast<double>(n), kMixtureFloor);
    const double log_m = std::log(m);
    for (const auto& p : members)
      if (p[c] > 0.0) total += p[c] * (std::log(p[c]) - log_m);
  }
  return std::max(total / static_cast<double>(n), 0.0);
}

inline void softmax_row(std::span<const double> z, std::span<double> p) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    p[j] = std::exp(z[j] - zmax);
    sum += p[j];
  }
  for (double& v : p) v /= sum;
}

}  // namespace detail

inline double ce_loss(const Posterior& p, std::size_t y) {
  detail::check_index(y, p.size());
  return detail::ce(p.probs(), y);
}

inline double focal_loss(const Posterior& p, std::size_t y, double gamma) {
  detail::check_index(y, p.size());
  detail::require(gamma >= 0.0, "focal gamma must be >= 0");
  return detail::focal(p.probs(), y, gamma);
}

inline double nce_loss(const Posterior& p, std::size_t y) {
  detail::check_index(y, p.size());
  return detail::nce(p.probs(), y);
}

inline double rce_loss(const Posterior& p, std::size_t y, double delta = 4.0) {
  detail::check_index(y, p.size());
  detail::require(delta > 0.0, "RCE delta must be positive");
  return detail::rce(p.probs(), y, delta);
}

inline double nce_rce_loss(const Posterior& p, std::size_t y, double beta1, double beta2, double delta = 4.0) {
  detail::check_index(y, p.size());
  detail::require(beta1 > 0.0 && beta2 > 0.0, "NCE+RCE betas must be positive");
  detail::require(delta > 0.0, "RCE delta must be positive");
  return beta1 * detail::nce(p.probs(), y) + beta2 * detail::rce(p.probs(), y, delta);
}

/// Pass kAlphaInfinity for the 0-1 loss limit.
inline double alpha_loss(const Posterior& p, std::size_t y, double alpha) {
  detail::check_index(y, p.size());
  detail::require(alpha > 0.0, "alpha must be positive");
  return detail::alpha(p.probs(), y, alpha);
}

/// Dispatches to the family selected by `spec` (the consistency weight is not used).
inline double basic_loss(const LossSpec& spec, const Posterior& p, std::size_t y) {
  spec.validate();
  detail::check_index(y, p.size());
  return detail::basic(spec, p.probs(), y);
}

/// Gradient of basic_loss with respect to the probability vector.
inline std::vector<double> basic_loss_prob_gradient(const LossSpec& spec, const Posterior& p, std::size_t y) {
  spec.validate();
  detail::check_index(y, p.size());
  std::vector<double> g(p.size());
  detail::basic_prob_gradient(spec, p.probs(), y, g);
  return g;
}

/// Mean KL divergence of each member to the members' mixture. Lies in [0, ln n].
inline double js_consistency(const PosteriorTuple& tuple) {
  std::vector<std::span<const double>> views;
  views.reserve(tuple.size());
  for (const auto& p : tuple.members()) views.push_back(p.probs());
  return detail::js(views);
}

inline double augloss_objective(const PosteriorTuple& tuple, std::size_t y, const LossSpec& spec) {
  const double l1 = basic_loss(spec, tuple.orig(), y);
  if (spec.lambda == 0.0 || tuple.size() < 2) return l1;
  return l1 + spec.lambda * js_consistency(tuple);
}

inline Posterior softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  detail::softmax_row(logits, p);
  return Posterior(std::move(p));
}

/// Row-major n x K logits for one example: row 0 is the original view.
struct LogitTuple {
  std::size_t rows = 0;
  std::size_t classes = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return std::span<const double>(values).subspan(i * classes, classes); }
};

namespace detail {

inline void check_logits(std::span<const double> logits, std::size_t rows, std::size_t k) {
  require(rows >= 1 && k >= 2, "logit tuple needs >= 1 row and >= 2 classes");
  require(logits.size() == rows * k, "logit tuple size does not match rows x classes");
  for (double v : logits) require(std::isfinite(v), "non-finite logit");
}

/// Objective value and d(objective)/d(logits) for one example. `grad` is
/// overwritten; `probs` is scratch of size rows*k.
inline double objective_and_gradient(const LossSpec& spec, std::span<const double> logits, std::size_t rows,
                                     std::size_t k, std::size_t y, std::span<double> grad,
                                     std::span<double> probs) {
  for (std::size_t i = 0; i < rows; ++i) softmax_row(logits.subspan(i * k, k), probs.subspan(i * k, k));

  // pg holds p (.) dL/dp so that the softmax Jacobian reduces to pg - p * sum(pg).
  std::fill(grad.begin(), grad.end(), 0.0);
  auto p0 = std::span<const double>(probs).subspan(0, k);
  double value = basic(spec, p0, y);
  basic_prob_gradient(spec, p0, y, grad.subspan(0, k));
  for (std::size_t j = 0; j < k; ++j) grad[j] *= p0[j];

  if (spec.lambda > 0.0 && rows > 1) {
    const double n = static_cast<double>(rows);
    std::vector<double> log_mix(k);
    double js_total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      double m = 0.0;
      for (std::size_t i = 0; i < rows; ++i) m += probs[i * k + c];
      log_mix[c] = std::log(std::max(m / n, kMixtureFloor));
    }
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        const double p = probs[i * k + c];
        if (p <= 0.0) continue;
        const double t = p * (std::log(p) - log_mix[c]);
        js_total += t;
        grad[i * k + c] += spec.lambda * t / n;
      }
    }
    value += spec.lambda * std::max(js_total / n, 0.0);
  }

  for (std::size_t i = 0; i < rows; ++i) {
    auto g = grad.subspan(i * k, k);
    const double s = std::accumulate(g.begin(), g.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) g[j] -= probs[i * k + j] * s;
  }
  return value;
}

}  // namespace detail

/// Objective evaluated from logits (softmax applied per row).
inline double objective_from_logits(const LossSpec& spec, const LogitTuple& z, std::size_t y) {
  spec.validate();
  detail::check_logits(z.values, z.rows, z.classes);
  detail::check_index(y, z.classes);
  Posterior orig = softmax(z.row(0));
  std::vector<Posterior> augs;
  for (std::size_t i = 1; i < z.rows; ++i) augs.push_back(softmax(z.row(i)));
  return augloss_objective(PosteriorTuple(std::move(orig), std::move(augs)), y, spec);
}

/// Analytic gradient of the objective composed with a row-wise softmax.
/// The basic loss only sees row 0; the consistency term sees every row.
inline LogitTuple loss_gradient(const LossSpec& spec, const LogitTuple& z, std::size_t y) {
  spec.validate();
  detail::check_logits(z.values, z.rows, z.classes);
  detail::check_index(y, z.classes);
  LogitTuple g{z.rows, z.classes, std::vector<double>(z.values.size())};
  std::vector<double> scratch(z.values.size());
  detail::objective_and_gradient(spec, z.values, z.rows, z.classes, y, g.values, scratch);
  return g;
}

}  // namespace augloss

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
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "augloss/corruption.hpp"
#include "augloss/data_io.hpp"
#include "augloss/error.hpp"
#include "augloss/loss.hpp"
#include "augloss/model.hpp"
#include "augloss/trainer.hpp"

namespace augloss {

inline double clean_error(const ModelParams& params, const LabeledImageDataset& test) {
  detail::require(test.size() > 0, "clean error needs a nonempty test set");
  return error_rate(predict(params, test.images), test.labels);
}

/// Unweighted mean of per-kind errors.
inline double mean_corruption_error(std::span<const double> per_kind) {
  detail::require(!per_kind.empty(), "mCE needs at least one corruption kind");
  double s = 0.0;
  for (double e : per_kind) s += e;
  return s / static_cast<double>(per_kind.size());
}

/// Error of one kind: mean over its five severities.
inline double kind_error(const std::array<double, kSeverityLevels>& severity_errors) {
  double s = 0.0;
  for (double e : severity_errors) s += e;
  return s / kSeverityLevels;
}

struct CorruptionErrors {
  std::vector<CorruptionKind> kinds;
  std::vector<std::array<double, kSeverityLevels>> severity_errors;  // parallel to kinds
  std::vector<double> per_kind;                                      // parallel to kinds
  double mce = 0.0;

  std::size_t n_corruptions() const noexcept { return kinds.size(); }
};

/// Per-kind errors and mCE of `params` on a corrupted copy of a test set.
inline CorruptionErrors mce(const ModelParams& params, const CorruptedSuite& suite, const LabelSet& labels) {
  detail::require(!suite.kinds.empty(), "corrupted suite is empty");
  CorruptionErrors out;
  out.kinds = suite.kinds;
  for (std::size_t k = 0; k < suite.kinds.size(); ++k) {
    std::array<double, kSeverityLevels> errs{};
    for (int s = 1; s <= kSeverityLevels; ++s) errs[static_cast<std::size_t>(s - 1)] = error_rate(predict(params, suite.at(k, s)), labels);
    out.severity_errors.push_back(errs);
    out.per_kind.push_back(kind_error(errs));
  }
  out.mce = mean_corruption_error(out.per_kind);
  return out;
}

/// Identifies one training configuration. `key()` omits the seed.
struct RunFingerprint {
  std::string dataset;
  std::string noise_scheme;
  double eta = 0.0;
  std::string augment;
  std::string loss_family;
  std::string hyperparams;
  std::uint64_t seed = 0;

  std::string key() const {
    return dataset + "|" + noise_scheme + "|" + format_eta(eta) + "|" + augment + "|" + loss_family + "|" + hyperparams;
  }
  /// Key without eta: one noisy average is formed per family key.
  std::string family_key() const { return dataset + "|" + noise_scheme + "|" + augment + "|" + loss_family + "|" + hyperparams; }

  static std::string format_eta(double eta) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", eta);
    return buf;
  }
};

struct RunReport {
  RunFingerprint fingerprint;
  double clean_error = 0.0;
  std::vector<std::pair<std::string, double>> per_corruption;  // kind name -> error over 5 severities
  double mce = 0.0;

  std::size_t n_corruptions() const noexcept { return per_corruption.size(); }

  void validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    detail::require(in_unit(clean_error) && in_unit(mce), "error fractions must lie in [0, 1]");
    std::vector<double> errs;
    for (const auto& [name, e] : per_corruption) {
      detail::require(in_unit(e), "corruption error for " + name + " outside [0, 1]");
      errs.push_back(e);
    }
    if (!errs.empty()) detail::require(std::abs(mean_corruption_error(errs) - mce) <= 1e-12, "mce is not the mean of per-kind errors");
  }
};

inline RunReport make_run_report(RunFingerprint fp, double clean, const CorruptionErrors& ce) {
  RunReport r{std::move(fp), clean, {}, ce.mce};
  for (std::size_t i = 0; i < ce.kinds.size(); ++i) r.per_corruption.emplace_back(std::string(to_string(ce.kinds[i])), ce.per_kind[i]);
  return r;
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation; 0 when n < 2
};

/// Mean and sample standard deviation.
inline MetricSummary summarize(std::span<const double> values) {
  detail::require(!values.empty(), "cannot summarize an empty sample");
  MetricSummary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

/// Mean of the mCE values at nonzero noise rates; nullopt if there are none.
inline std::optional<double> noisy_average(const std::map<double, double>& mce_by_eta) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& [eta, m] : mce_by_eta)
    if (eta != 0.0) {
      s += m;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

struct AggregateEntry {
  RunFingerprint config;  // seed field unused
  MetricSummary clean_error;
  MetricSummary mce;
  std::vector<std::pair<std::string, MetricSummary>> per_corruption;
  std::size_t n_seeds = 0;
  bool single_seed = false;  // std reported as 0 because only one seed was available
  std::optional<double> noisy_avg;
  std::size_t n_corruptions = 0;
};

struct AggregateReport {
  std::vector<AggregateEntry> entries;             // sorted by key
  std::map<std::string, double> noisy_avg;         // family key -> mean mCE over nonzero eta
};

/// Groups reports by configuration (fingerprint minus seed). Within a group
/// every report must carry the same corruption kinds and distinct seeds.
inline AggregateReport aggregate(std::span<const RunReport> reports) {
  std::map<std::string, std::vector<const RunReport*>> groups;
  for (const auto& r : reports) groups[r.fingerprint.key()].push_back(&r);

  AggregateReport out;
  std::map<std::string, std::map<double, double>> by_family;
  for (auto& [key, members] : groups) {
    std::set<std::uint64_t> seeds;
    const auto& first = *members.front();
    std::vector<double> clean, m;
    std::vector<std::vector<double>> kinds(first.per_corruption.size());
    for (const RunReport* r : members) {
      detail::require(seeds.insert(r->fingerprint.seed).second, "duplicate seed in group " + key);
      detail::require(r->per_corruption.size() == first.per_corruption.size(), "inconsistent corruption kinds in group " + key);
      for (std::size_t i = 0; i < first.per_corruption.size(); ++i) {
        detail::require(r->per_corruption[i].first == first.per_corruption[i].first, "inconsistent corruption kinds in group " + key);
        kinds[i].push_back(r->per_corruption[i].second);
      }
      clean.push_back(r->clean_error);
      m.push_back(r->mce);
    }
    AggregateEntry e;
    e.config = first.fingerprint;
    e.config.seed = 0;
    e.clean_error = summarize(clean);
    e.mce = summarize(m);
    for (std::size_t i = 0; i < kinds.size(); ++i) e.per_corruption.emplace_back(first.per_corruption[i].first, summarize(kinds[i]));
    e.n_seeds = members.size();
    e.single_seed = members.size() < 2;
    e.n_corruptions = first.per_corruption.size();
    by_family[e.config.family_key()][e.config.eta] = e.mce.mean;
    out.entries.push_back(std::move(e));
  }
  for (const auto& [family, per_eta] : by_family)
    if (auto avg = noisy_average(per_eta)) out.noisy_avg[family] = *avg;
  for (auto& e : out.entries) {
    auto it = out.noisy_avg.find(e.config.family_key());
    if (it != out.noisy_avg.end()) e.noisy_avg = it->second;
  }
  return out;
}

// --- hyperparameter search -------------------------------------------------

/// Tunable hyperparameters of `spec`'s family, in comparison order.
inline std::vector<double> hyperparameter_key(const LossSpec& spec) {
  switch (spec.family) {
    case LossFamily::CE: return {};
    case LossFamily::Focal: return {spec.gamma};
    case LossFamily::NceRce: return {spec.beta1, spec.beta2};
    case LossFamily::Alpha: return {spec.alpha};
  }
  return {};
}

/// The tuning grid for a family, in ascending lexicographic order.
inline std::vector<LossSpec> search_space(LossFamily family) {
  std::vector<LossSpec> out;
  switch (family) {
    case LossFamily::CE: out.push_back(LossSpec::ce()); break;
    case LossFamily::Focal:
      for (double g : {0.0, 0.5, 1.0, 2.0, 5.0}) out.push_back(LossSpec::focal(g));
      break;
    case LossFamily::NceRce:
      for (double b1 : {0.1, 1.0, 10.0, 99.0, 99.9})
        for (double b2 : {0.1, 1.0, 10.0, 100.0}) out.push_back(LossSpec::nce_rce(b1, b2));
      break;
    case LossFamily::Alpha:
      for (double a : {1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 2.0, 3.0, 4.0}) out.push_back(LossSpec::alpha_loss(a));
      break;
  }
  return out;
}

struct GridPoint {
  LossSpec spec;
  double score = 0.0;
};

struct GridResult {
  LossSpec best;
  double best_score = 0.0;
  std::vector<GridPoint> points;  // in evaluation order
};

/// Scores every point and returns the minimum; equal scores go to the
/// lexicographically smaller hyperparameter tuple.
inline GridResult grid_search(std::span<const LossSpec> space, const std::function<double(const LossSpec&)>& score) {
  detail::require(!space.empty(), "search space is empty");
  GridResult out;
  for (const auto& spec : space) {
    spec.validate();
    out.points.push_back({spec, score(spec)});
  }
  const GridPoint* best = &out.points.front();
  for (const auto& p : out.points) {
    if (p.score < best->score || (p.score == best->score && hyperparameter_key(p.spec) < hyperparameter_key(best->spec)))
      best = &p;
  }
  out.best = best->spec;
  out.best_score = best->score;
  return out;
}

}  // namespace augloss

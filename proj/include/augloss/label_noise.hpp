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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "augloss/error.hpp"
#include "augloss/random.hpp"

namespace augloss {

/// Canonical CIFAR-10 class order; the asymmetric flip map indexes into it.
inline constexpr std::array<const char*, 10> kCifar10Classes = {
    "airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};

/// Class labels together with the size of the label space.
struct LabelSet {
  std::vector<std::size_t> labels;
  std::size_t k = 0;

  LabelSet() = default;
  LabelSet(std::vector<std::size_t> l, std::size_t classes) : labels(std::move(l)), k(classes) {
    detail::require(k >= 2, "label set needs at least two classes");
    for (std::size_t v : labels) detail::require(v < k, "label " + std::to_string(v) + " outside [0, K)");
  }

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t operator[](std::size_t i) const { return labels[i]; }
  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

/// Row-stochastic K x K matrix; entry (i, j) is P(noisy = j | clean = i).
class TransitionMatrix {
 public:
  TransitionMatrix(std::size_t k, std::vector<double> entries) : k_(k), entries_(std::move(entries)) {
    detail::require(k_ >= 2, "transition matrix needs K >= 2");
    detail::require(entries_.size() == k_ * k_, "transition matrix must have K*K entries");
    for (std::size_t i = 0; i < k_; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k_; ++j) {
        const double v = at(i, j);
        detail::require(v >= 0.0 && v <= 1.0, "transition entry outside [0, 1]");
        sum += v;
      }
      detail::require(std::abs(sum - 1.0) <= 1e-9, "transition row " + std::to_string(i) + " does not sum to 1");
    }
  }

  static TransitionMatrix identity(std::size_t k) {
    std::vector<double> e(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) e[i * k + i] = 1.0;
    return TransitionMatrix(k, std::move(e));
  }

  std::size_t k() const noexcept { return k_; }
  double at(std::size_t row, std::size_t col) const { return entries_[row * k_ + col]; }
  const std::vector<double>& entries() const noexcept { return entries_; }

 private:
  std::size_t k_;
  std::vector<double> entries_;
};

/// Disjoint groups of class indices covering [0, K).
class SuperclassPartition {
 public:
  explicit SuperclassPartition(std::vector<std::vector<std::size_t>> groups) : groups_(std::move(groups)) {
    detail::require(!groups_.empty(), "superclass partition is empty");
    for (const auto& g : groups_) {
      detail::require(!g.empty(), "superclass group is empty");
      k_ += g.size();
    }
    std::vector<bool> seen(k_, false);
    for (const auto& g : groups_)
      for (std::size_t c : g) {
        detail::require(c < k_, "superclass member " + std::to_string(c) + " outside [0, K)");
        detail::require(!seen[c], "class " + std::to_string(c) + " appears in two superclasses");
        seen[c] = true;
      }
  }

  /// Consecutive runs of `group_size` classes.
  static SuperclassPartition contiguous(std::size_t k, std::size_t group_size) {
    detail::require(group_size >= 1 && k % group_size == 0, "K must be a multiple of the group size");
    std::vector<std::vector<std::size_t>> groups(k / group_size);
    for (std::size_t c = 0; c < k; ++c) groups[c / group_size].push_back(c);
    return SuperclassPartition(std::move(groups));
  }

  std::size_t k() const noexcept { return k_; }
  const std::vector<std::vector<std::size_t>>& groups() const noexcept { return groups_; }

 private:
  std::vector<std::vector<std::size_t>> groups_;
  std::size_t k_ = 0;
};

/// The 20 CIFAR-100 superclasses of 5 fine classes each (fine-label order).
inline SuperclassPartition cifar100_superclasses() {
  static constexpr std::array<int, 100> coarse = {
      4,  1,  14, 8,  0,  6,  7,  7,  18, 3,  3,  14, 9,  18, 7,  11, 3,  9,  7,  11,
      6,  11, 5,  10, 7,  6,  13, 15, 3,  15, 0,  11, 1,  10, 12, 14, 16, 9,  11, 5,
      5,  19, 8,  8,  15, 13, 14, 17, 18, 10, 16, 4,  17, 4,  2,  0,  17, 4,  18, 17,
      10, 3,  2,  12, 12, 16, 12, 1,  9,  19, 2,  10, 0,  1,  16, 12, 9,  13, 15, 13,
      16, 19, 2,  4,  6,  19, 5,  5,  8,  19, 18, 1,  2,  15, 6,  0,  17, 8,  14, 13};
  std::vector<std::vector<std::size_t>> groups(20);
  for (std::size_t fine = 0; fine < coarse.size(); ++fine) groups[coarse[fine]].push_back(fine);
  return SuperclassPartition(std::move(groups));
}

namespace detail {
inline void check_rate(double eta) { require(eta >= 0.0 && eta <= 1.0, "noise rate must lie in [0, 1]"); }
}  // namespace detail

inline TransitionMatrix symmetric_transition(std::size_t k, double eta) {
  detail::check_rate(eta);
  detail::require(k >= 2, "symmetric noise needs K >= 2");
  const double off = eta / static_cast<double>(k - 1);
  std::vector<double> e(k * k, off);
  for (std::size_t i = 0; i < k; ++i) e[i * k + i] = 1.0 - eta;
  return TransitionMatrix(k, std::move(e));
}

/// truck->automobile, bird->airplane, deer->horse, cat<->dog; other rows keep their label.
inline TransitionMatrix asymmetric_transition_cifar10(double eta) {
  detail::check_rate(eta);
  constexpr std::size_t k = 10;
  constexpr std::array<std::pair<std::size_t, std::size_t>, 5> flips = {{{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}}};
  std::vector<double> e(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) e[i * k + i] = 1.0;
  for (auto [from, to] : flips) {
    e[from * k + from] = 1.0 - eta;
    e[from * k + to] = eta;
  }
  return TransitionMatrix(k, std::move(e));
}

/// Keeps a label with probability 1 - eta, otherwise moves it uniformly to
/// another member of its group. Singleton groups never flip.
inline TransitionMatrix superclass_transition(const SuperclassPartition& partition, double eta) {
  detail::check_rate(eta);
  const std::size_t k = partition.k();
  std::vector<double> e(k * k, 0.0);
  for (const auto& group : partition.groups()) {
    const std::size_t g = group.size();
    for (std::size_t i : group) {
      if (g == 1) {
        e[i * k + i] = 1.0;
        continue;
      }
      for (std::size_t j : group) e[i * k + j] = (i == j) ? 1.0 - eta : eta / static_cast<double>(g - 1);
    }
  }
  return TransitionMatrix(k, std::move(e));
}

/// Resamples every label independently from its row of `t`.
inline LabelSet apply_noise(const LabelSet& labels, const TransitionMatrix& t, std::uint64_t seed) {
  detail::require(labels.k == t.k(), "label set and transition matrix disagree on K");
  Rng rng = make_rng(seed);
  const std::size_t k = t.k();
  LabelSet out;
  out.k = k;
  out.labels.resize(labels.size());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const std::size_t row = labels[n];
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t pick = row;
    // Falls through to the last nonzero column if rounding leaves u above the cumulative sum.
    for (std::size_t j = 0; j < k; ++j) {
      const double w = t.at(row, j);
      if (w <= 0.0) continue;
      pick = j;
      acc += w;
      if (u < acc) break;
    }
    out.labels[n] = pick;
  }
  return out;
}

inline TransitionMatrix empirical_transition(const LabelSet& clean, const LabelSet& noisy) {
  detail::require(clean.size() == noisy.size(), "clean and noisy label sets differ in length");
  detail::require(clean.k == noisy.k, "clean and noisy label sets differ in K");
  const std::size_t k = clean.k;
  std::vector<double> counts(k * k, 0.0);
  std::vector<double> totals(k, 0.0);
  for (std::size_t n = 0; n < clean.size(); ++n) {
    counts[clean[n] * k + noisy[n]] += 1.0;
    totals[clean[n]] += 1.0;
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (totals[i] == 0.0) throw ArgumentError("class " + std::to_string(i) + " never appears in the clean labels");
    for (std::size_t j = 0; j < k; ++j) counts[i * k + j] /= totals[i];
  }
  return TransitionMatrix(k, std::move(counts));
}

/// Fraction of positions where the two label sets disagree.
inline double flip_fraction(const LabelSet& clean, const LabelSet& noisy) {
  detail::require(clean.size() == noisy.size() && clean.size() > 0, "label sets must be nonempty and equal length");
  std::size_t flips = 0;
  for (std::size_t n = 0; n < clean.size(); ++n) flips += clean[n] != noisy[n];
  return static_cast<double>(flips) / static_cast<double>(clean.size());
}

/// K rows of K comma-separated values with 6 decimals.
inline void write_transition_csv(std::ostream& os, const TransitionMatrix& t) {
  os << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < t.k(); ++i) {
    for (std::size_t j = 0; j < t.k(); ++j) os << (j ? "," : "") << t.at(i, j);
    os << '\n';
  }
  os << std::defaultfloat;
}

inline void write_labels_csv(std::ostream& os, const LabelSet& labels) {
  os << "index,label\n";
  for (std::size_t n = 0; n < labels.size(); ++n) os << n << ',' << labels[n] << '\n';
}

/// Parses `index,label` rows (header required). ParseError::location() is the 1-based line number.
inline LabelSet parse_external_labels(std::istream& in, std::size_t expected_len, std::size_t k) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError("line " + std::to_string(line_no) + ": " + what, line_no);
  };
  if (!std::getline(in, line)) throw ParseError("empty label file", 0);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "index,label") throw fail("expected header 'index,label'");

  std::vector<std::optional<std::size_t>> slots(expected_len);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rows;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw fail("expected 'index,label'");
    long long index = 0;
    long long label = 0;
    try {
      std::size_t used = 0;
      index = std::stoll(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("trailing");
      const std::string rest = line.substr(comma + 1);
      label = std::stoll(rest, &used);
      if (used != rest.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw fail("malformed row '" + line + "'");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= k)
      throw fail("index " + std::to_string(index) + ": label " + std::to_string(label) + " outside [0, " +
                 std::to_string(k) + ")");
    if (index < 0 || static_cast<std::size_t>(index) >= expected_len) {
      if (rows > expected_len) throw fail("more rows than the expected " + std::to_string(expected_len));
      throw fail("index " + std::to_string(index) + " outside [0, " + std::to_string(expected_len) + ")");
    }
    auto& slot = slots[static_cast<std::size_t>(index)];
    if (slot) throw fail("duplicate index " + std::to_string(index));
    slot = static_cast<std::size_t>(label);
  }
  if (rows != expected_len)
    throw ParseError("length mismatch: " + std::to_string(rows) + " rows, expected " + std::to_string(expected_len),
                     line_no);
  std::vector<std::size_t> labels(expected_len);
  for (std::size_t i = 0; i < expected_len; ++i) {
    if (!slots[i]) throw ParseError("missing index " + std::to_string(i), line_no);
    labels[i] = *slots[i];
  }
  return LabelSet(std::move(labels), k);
}

inline LabelSet load_external_labels(const std::string& path, std::size_t expected_len, std::size_t k) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open label file '" + path + "'", 0);
  return parse_external_labels(in, expected_len, k);
}

}  // namespace augloss

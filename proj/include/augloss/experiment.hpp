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

#include <toml.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "augloss/augment.hpp"
#include "augloss/corruption.hpp"
#include "augloss/data_io.hpp"
#include "augloss/error.hpp"
#include "augloss/evaluation.hpp"
#include "augloss/label_noise.hpp"
#include "augloss/loss.hpp"
#include "augloss/model.hpp"
#include "augloss/trainer.hpp"

namespace augloss {

namespace fs = std::filesystem;

// --- configuration ---------------------------------------------------------

struct DatasetConfig {
  enum class Kind { Synthetic, Cifar10 };
  Kind kind = Kind::Synthetic;
  SynthOptions synth;                 // train split for the synthetic kind
  std::size_t test_per_class = 100;   // synthetic test split size
  std::vector<fs::path> train_files;  // CIFAR-10
  std::vector<fs::path> test_files;
  std::size_t train_limit = 0;        // 0 keeps everything
  std::size_t test_limit = 0;
  std::optional<fs::path> external_labels;

  std::string name() const { return kind == Kind::Synthetic ? "synthetic" : "cifar10"; }
};

enum class NoiseScheme { Symmetric, AsymmetricCifar10, Superclass, External };

inline std::string_view to_string(NoiseScheme s) {
  switch (s) {
    case NoiseScheme::Symmetric: return "symmetric";
    case NoiseScheme::AsymmetricCifar10: return "asymmetric_cifar10";
    case NoiseScheme::Superclass: return "superclass";
    case NoiseScheme::External: return "external";
  }
  return "?";
}

inline NoiseScheme parse_noise_scheme(std::string_view s) {
  for (auto v : {NoiseScheme::Symmetric, NoiseScheme::AsymmetricCifar10, NoiseScheme::Superclass, NoiseScheme::External})
    if (to_string(v) == s) return v;
  throw ArgumentError("unknown noise scheme '" + std::string(s) + "'");
}

struct NoiseConfig {
  NoiseScheme scheme = NoiseScheme::Symmetric;
  std::vector<double> etas{0.0};
  std::optional<SuperclassPartition> partition;  // superclass scheme
};

enum class AugmentMode { NoAug, AugMix };

inline std::string_view to_string(AugmentMode m) { return m == AugmentMode::NoAug ? "noaug" : "augmix"; }

inline AugmentMode parse_augment_mode(std::string_view s) {
  if (s == "noaug") return AugmentMode::NoAug;
  if (s == "augmix") return AugmentMode::AugMix;
  throw ArgumentError("unknown augmentation mode '" + std::string(s) + "'");
}

struct LossEntry {
  LossSpec spec;
  bool tune = false;  // pick hyperparameters by grid search at 20% symmetric noise
};

struct ExperimentConfig {
  DatasetConfig dataset;
  NoiseConfig noise;
  std::vector<AugmentMode> augment{AugmentMode::NoAug};
  AugmentPolicy policy;
  std::vector<LossEntry> losses{{LossSpec::ce(), false}};
  TrainConfig train;
  std::optional<std::size_t> tune_epochs;
  std::vector<CorruptionKind> corruptions{kAllCorruptions.begin(), kAllCorruptions.end()};
  std::uint64_t corruption_seed = 2024;
  std::vector<std::uint64_t> seeds{0};
  bool save_checkpoints = false;
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const toml::node* n, const std::string& msg) const {
    const std::size_t line = n ? n->source().begin.line : 0;
    throw ParseError(source_ + ":" + std::to_string(line) + ": " + msg, line);
  }

  void allow(const toml::table& t, std::initializer_list<std::string_view> keys, std::string_view where) const {
    for (const auto& [k, v] : t) {
      if (std::find(keys.begin(), keys.end(), k.str()) == keys.end())
        fail(&v, "unknown key '" + std::string(k.str()) + "' in [" + std::string(where) + "]");
    }
  }

  const toml::table* table(const toml::table& t, std::string_view key) const {
    const toml::node* n = t.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail(n, "'" + std::string(key) + "' must be a table");
    return n->as_table();
  }

  double number(const toml::table& t, std::string_view key, double def) const {
    const toml::node* n = t.get(key);
    if (!n) return def;
    if (auto v = n->value<double>()) return *v;
    fail(n, "'" + std::string(key) + "' must be a number");
  }

  std::int64_t integer(const toml::table& t, std::string_view key, std::int64_t def, std::int64_t min = 0) const {
    const toml::node* n = t.get(key);
    if (!n) return def;
    auto v = n->value_exact<std::int64_t>();
    if (!v) fail(n, "'" + std::string(key) + "' must be an integer");
    if (*v < min) fail(n, "'" + std::string(key) + "' must be >= " + std::to_string(min));
    return *v;
  }

  bool boolean(const toml::table& t, std::string_view key, bool def) const {
    const toml::node* n = t.get(key);
    if (!n) return def;
    auto v = n->value_exact<bool>();
    if (!v) fail(n, "'" + std::string(key) + "' must be true or false");
    return *v;
  }

  std::string string(const toml::table& t, std::string_view key, std::string def) const {
    const toml::node* n = t.get(key);
    if (!n) return def;
    auto v = n->value_exact<std::string>();
    if (!v) fail(n, "'" + std::string(key) + "' must be a string");
    return *v;
  }

  const toml::array* array(const toml::table& t, std::string_view key) const {
    const toml::node* n = t.get(key);
    if (!n) return nullptr;
    if (!n->is_array()) fail(n, "'" + std::string(key) + "' must be an array");
    return n->as_array();
  }

  std::vector<double> numbers(const toml::table& t, std::string_view key) const {
    std::vector<double> out;
    if (const auto* a = array(t, key))
      for (const auto& e : *a) {
        auto v = e.value<double>();
        if (!v) fail(&e, "'" + std::string(key) + "' entries must be numbers");
        out.push_back(*v);
      }
    return out;
  }

  std::vector<std::string> strings(const toml::table& t, std::string_view key) const {
    std::vector<std::string> out;
    if (const auto* a = array(t, key))
      for (const auto& e : *a) {
        auto v = e.value_exact<std::string>();
        if (!v) fail(&e, "'" + std::string(key) + "' entries must be strings");
        out.push_back(*v);
      }
    return out;
  }

  /// Runs `f`, rethrowing ArgumentError as a ParseError at node `n`.
  template <typename F>
  auto guarded(const toml::node* n, F&& f) const {
    try {
      return f();
    } catch (const ArgumentError& e) {
      fail(n, e.what());
    }
  }

 private:
  std::string source_;
};

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

/// Parses the TOML experiment schema (see configs/example.toml). Relative
/// paths resolve against `base_dir`. ParseError::location() is a line number.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>",
                                     const fs::path& base_dir = {}) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    const std::size_t line = e.source().begin.line;
    throw ParseError(source + ":" + std::to_string(line) + ": " + std::string(e.description()), line);
  }
  detail::ConfigReader rd(source);
  rd.allow(root, {"dataset", "noise", "augment", "loss", "train", "corruptions", "run"}, "root");
  ExperimentConfig cfg;

  if (const auto* t = rd.table(root, "dataset")) {
    rd.allow(*t, {"kind", "classes", "train_per_class", "test_per_class", "side", "noise_sd", "seed", "channels", "max_offset",
                  "train_files", "test_files", "train_limit", "test_limit", "external_labels"},
             "dataset");
    const std::string kind = rd.string(*t, "kind", "synthetic");
    if (kind == "synthetic") {
      cfg.dataset.kind = DatasetConfig::Kind::Synthetic;
    } else if (kind == "cifar10") {
      cfg.dataset.kind = DatasetConfig::Kind::Cifar10;
    } else {
      rd.fail(t->get("kind"), "dataset kind must be 'synthetic' or 'cifar10'");
    }
    auto& s = cfg.dataset.synth;
    s.k = static_cast<std::size_t>(rd.integer(*t, "classes", 10, 2));
    s.n_per_class = static_cast<std::size_t>(rd.integer(*t, "train_per_class", 100, 1));
    cfg.dataset.test_per_class = static_cast<std::size_t>(rd.integer(*t, "test_per_class", 100, 1));
    s.side = static_cast<std::size_t>(rd.integer(*t, "side", 16, 4));
    s.noise_sd = rd.number(*t, "noise_sd", 0.1);
    s.seed = static_cast<std::uint64_t>(rd.integer(*t, "seed", 0));
    s.channels = static_cast<std::size_t>(rd.integer(*t, "channels", 3, 1));
    s.max_offset = static_cast<int>(rd.integer(*t, "max_offset", 2));
    if (s.k > kSynthTemplateCount && cfg.dataset.kind == DatasetConfig::Kind::Synthetic)
      rd.fail(t->get("classes"), "synthetic dataset supports at most 10 classes");
    if (s.channels != 1 && s.channels != 3) rd.fail(t->get("channels"), "channels must be 1 or 3");
    for (const auto& f : rd.strings(*t, "train_files")) cfg.dataset.train_files.push_back(detail::resolve(base_dir, f));
    for (const auto& f : rd.strings(*t, "test_files")) cfg.dataset.test_files.push_back(detail::resolve(base_dir, f));
    cfg.dataset.train_limit = static_cast<std::size_t>(rd.integer(*t, "train_limit", 0));
    cfg.dataset.test_limit = static_cast<std::size_t>(rd.integer(*t, "test_limit", 0));
    if (t->get("external_labels")) cfg.dataset.external_labels = detail::resolve(base_dir, rd.string(*t, "external_labels", ""));
    if (cfg.dataset.kind == DatasetConfig::Kind::Cifar10 && (cfg.dataset.train_files.empty() || cfg.dataset.test_files.empty()))
      rd.fail(t, "cifar10 dataset needs train_files and test_files");
  }

  if (const auto* t = rd.table(root, "noise")) {
    rd.allow(*t, {"scheme", "etas", "groups", "group_size", "cifar100_superclasses"}, "noise");
    cfg.noise.scheme = rd.guarded(t->get("scheme"), [&] { return parse_noise_scheme(rd.string(*t, "scheme", "symmetric")); });
    if (t->get("etas")) cfg.noise.etas = rd.numbers(*t, "etas");
    for (double eta : cfg.noise.etas)
      if (eta < 0.0 || eta > 1.0) rd.fail(t->get("etas"), "noise rates must lie in [0, 1]");
    if (cfg.noise.etas.empty()) rd.fail(t->get("etas"), "at least one noise rate is required");
    if (cfg.noise.scheme == NoiseScheme::Superclass) {
      if (const auto* g = rd.array(*t, "groups")) {
        std::vector<std::vector<std::size_t>> groups;
        for (const auto& row : *g) {
          if (!row.is_array()) rd.fail(&row, "groups must be an array of integer arrays");
          std::vector<std::size_t> group;
          for (const auto& e : *row.as_array()) {
            auto v = e.value_exact<std::int64_t>();
            if (!v || *v < 0) rd.fail(&e, "group members must be nonnegative integers");
            group.push_back(static_cast<std::size_t>(*v));
          }
          groups.push_back(std::move(group));
        }
        cfg.noise.partition = rd.guarded(g, [&] { return SuperclassPartition(groups); });
      } else if (rd.boolean(*t, "cifar100_superclasses", false)) {
        cfg.noise.partition = cifar100_superclasses();
      } else {
        const auto size = static_cast<std::size_t>(rd.integer(*t, "group_size", 5, 1));
        const std::size_t k = cfg.dataset.kind == DatasetConfig::Kind::Cifar10 ? 10 : cfg.dataset.synth.k;
        cfg.noise.partition = rd.guarded(t, [&] { return SuperclassPartition::contiguous(k, size); });
      }
    }
  }
  if (cfg.noise.scheme == NoiseScheme::External && !cfg.dataset.external_labels)
    rd.fail(rd.table(root, "noise"), "external noise scheme needs dataset.external_labels");

  if (const auto* t = rd.table(root, "augment")) {
    rd.allow(*t, {"modes", "width", "depth_min", "depth_max", "severity", "ops", "dirichlet_alpha", "skip_beta"}, "augment");
    if (t->get("modes")) {
      cfg.augment.clear();
      for (const auto& m : rd.strings(*t, "modes"))
        cfg.augment.push_back(rd.guarded(t->get("modes"), [&] { return parse_augment_mode(m); }));
    }
    auto& p = cfg.policy;
    p.width = static_cast<std::size_t>(rd.integer(*t, "width", 3, 1));
    p.depth_min = static_cast<std::size_t>(rd.integer(*t, "depth_min", 1, 1));
    p.depth_max = static_cast<std::size_t>(rd.integer(*t, "depth_max", 3, 1));
    p.severity = static_cast<int>(rd.integer(*t, "severity", 3));
    p.dirichlet_alpha = rd.number(*t, "dirichlet_alpha", 1.0);
    if (t->get("ops")) {
      p.ops.clear();
      for (const auto& o : rd.strings(*t, "ops")) p.ops.push_back(rd.guarded(t->get("ops"), [&] { return parse_augment_op(o); }));
    }
    if (t->get("skip_beta")) {
      const auto b = rd.numbers(*t, "skip_beta");
      if (b.size() != 2) rd.fail(t->get("skip_beta"), "skip_beta must have two entries");
      p.skip_beta = {b[0], b[1]};
    }
    rd.guarded(t, [&] {
      p.validate();
      return 0;
    });
  }
  if (cfg.augment.empty()) rd.fail(rd.table(root, "augment"), "at least one augmentation mode is required");

  if (const toml::node* n = root.get("loss")) {
    const auto* arr = n->as_array();
    if (!arr || !arr->is_array_of_tables()) rd.fail(n, "loss entries must be written as [[loss]] tables");
    cfg.losses.clear();
    for (const auto& e : *arr) {
      const auto& t = *e.as_table();
      rd.allow(t, {"family", "gamma", "beta1", "beta2", "delta", "alpha", "lambda", "tune"}, "loss");
      LossEntry entry;
      entry.spec.family = rd.guarded(t.get("family"), [&] { return parse_loss_family(rd.string(t, "family", "ce")); });
      entry.spec.gamma = rd.number(t, "gamma", entry.spec.gamma);
      entry.spec.beta1 = rd.number(t, "beta1", entry.spec.beta1);
      entry.spec.beta2 = rd.number(t, "beta2", entry.spec.beta2);
      entry.spec.delta = rd.number(t, "delta", entry.spec.delta);
      if (const toml::node* a = t.get("alpha"); a && a->value_exact<std::string>() == "inf")
        entry.spec.alpha = kAlphaInfinity;
      else
        entry.spec.alpha = rd.number(t, "alpha", entry.spec.alpha);
      entry.spec.lambda = rd.number(t, "lambda", entry.spec.lambda);
      entry.tune = rd.boolean(t, "tune", false);
      rd.guarded(&e, [&] {
        entry.spec.validate();
        return 0;
      });
      cfg.losses.push_back(entry);
    }
    if (cfg.losses.empty()) rd.fail(n, "at least one [[loss]] entry is required");
  }

  if (const auto* t = rd.table(root, "train")) {
    rd.allow(*t, {"epochs", "batch_size", "lr0", "lr_min", "momentum", "weight_decay", "flip_prob", "standardize", "hidden",
                  "tune_epochs"},
             "train");
    auto& tc = cfg.train;
    tc.epochs = static_cast<std::size_t>(rd.integer(*t, "epochs", 30, 1));
    tc.batch_size = static_cast<std::size_t>(rd.integer(*t, "batch_size", 32, 1));
    tc.lr0 = rd.number(*t, "lr0", tc.lr0);
    tc.lr_min = rd.number(*t, "lr_min", tc.lr_min);
    tc.momentum = rd.number(*t, "momentum", tc.momentum);
    tc.weight_decay = rd.number(*t, "weight_decay", tc.weight_decay);
    tc.flip_prob = rd.number(*t, "flip_prob", tc.flip_prob);
    tc.standardize_inputs = rd.boolean(*t, "standardize", true);
    if (t->get("hidden")) {
      tc.hidden.clear();
      for (double h : rd.numbers(*t, "hidden")) {
        if (h < 1 || h != std::floor(h)) rd.fail(t->get("hidden"), "hidden widths must be positive integers");
        tc.hidden.push_back(static_cast<std::size_t>(h));
      }
    }
    if (t->get("tune_epochs")) cfg.tune_epochs = static_cast<std::size_t>(rd.integer(*t, "tune_epochs", 1, 1));
    rd.guarded(t, [&] {
      tc.validate();
      return 0;
    });
  }

  if (const auto* t = rd.table(root, "corruptions")) {
    rd.allow(*t, {"kinds", "seed"}, "corruptions");
    if (t->get("kinds")) {
      cfg.corruptions.clear();
      for (const auto& k : rd.strings(*t, "kinds"))
        cfg.corruptions.push_back(rd.guarded(t->get("kinds"), [&] { return parse_corruption_kind(k); }));
      if (cfg.corruptions.empty()) rd.fail(t->get("kinds"), "at least one corruption kind is required");
    }
    cfg.corruption_seed = static_cast<std::uint64_t>(rd.integer(*t, "seed", 2024));
  }

  if (const auto* t = rd.table(root, "run")) {
    rd.allow(*t, {"seeds", "save_checkpoints"}, "run");
    if (t->get("seeds")) {
      cfg.seeds.clear();
      if (const auto* a = rd.array(*t, "seeds"))
        for (const auto& e : *a) {
          auto v = e.value_exact<std::int64_t>();
          if (!v || *v < 0) rd.fail(&e, "seeds must be nonnegative integers");
          cfg.seeds.push_back(static_cast<std::uint64_t>(*v));
        }
      if (cfg.seeds.empty()) rd.fail(t->get("seeds"), "at least one seed is required");
    }
    cfg.save_checkpoints = rd.boolean(*t, "save_checkpoints", false);
  }
  return cfg;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), path.parent_path());
}

// --- data preparation ------------------------------------------------------

struct PreparedData {
  LabeledImageDataset train;  // clean labels
  LabeledImageDataset test;
  std::optional<LabelSet> external_noisy;
};

inline PreparedData prepare_data(const DatasetConfig& d) {
  PreparedData out;
  if (d.kind == DatasetConfig::Kind::Synthetic) {
    out.train = synth_shapes(d.synth);
    SynthOptions test = d.synth;
    test.n_per_class = d.test_per_class;
    test.seed = derive_seed(d.synth.seed, {0x7E57});
    out.test = synth_shapes(test);
  } else {
    out.train = load_cifar10_binary(d.train_files);
    out.test = load_cifar10_binary(d.test_files);
  }
  auto limit = [](LabeledImageDataset& ds, std::size_t n) {
    if (n == 0 || n >= ds.size()) return;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    ds = subset(ds, idx);
  };
  limit(out.train, d.train_limit);
  limit(out.test, d.test_limit);
  if (d.external_labels) out.external_noisy = load_external_labels(d.external_labels->string(), out.train.size(), out.train.classes());
  return out;
}

inline TransitionMatrix make_transition(const NoiseConfig& noise, std::size_t k, double eta) {
  switch (noise.scheme) {
    case NoiseScheme::Symmetric: return symmetric_transition(k, eta);
    case NoiseScheme::AsymmetricCifar10:
      detail::require(k == 10, "asymmetric CIFAR-10 noise needs K = 10");
      return asymmetric_transition_cifar10(eta);
    case NoiseScheme::Superclass: {
      detail::require(noise.partition.has_value() && noise.partition->k() == k, "superclass partition does not cover K");
      return superclass_transition(*noise.partition, eta);
    }
    case NoiseScheme::External: break;
  }
  throw ArgumentError("external noise has no transition matrix");
}

inline std::uint64_t noise_seed(std::uint64_t seed, double eta) {
  return derive_seed(seed, {0x4015E, static_cast<std::uint64_t>(std::llround(eta * 1e6))});
}

// --- single runs -----------------------------------------------------------

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}


struct RunSpec {
  double eta = 0.0;
  AugmentMode augment = AugmentMode::NoAug;
  LossSpec loss;
  std::uint64_t seed = 0;
};

struct RunArtifacts {
  RunReport report;
  TrainResult trained;
  double realized_flip_fraction = 0.0;
};

inline RunFingerprint fingerprint_for(const ExperimentConfig& cfg, const RunSpec& run, double recorded_eta) {
  std::string hp = describe_hyperparams(run.loss);
  if (run.augment == AugmentMode::AugMix) {
    const std::string lam = "lambda=" + format_double(run.loss.lambda);
    hp = hp == "-" ? lam : hp + ";" + lam;
  }
  return {cfg.dataset.name(), std::string(to_string(cfg.noise.scheme)), recorded_eta, std::string(to_string(run.augment)),
          std::string(to_string(run.loss.family)), hp, run.seed};
}

/// Noise -> train -> clean error and mCE for one grid cell.
inline RunArtifacts execute_run(const ExperimentConfig& cfg, const PreparedData& data, const CorruptedSuite& suite,
                                const RunSpec& run, std::optional<std::size_t> epochs_override = std::nullopt) {
  LabelSet noisy;
  double recorded_eta = run.eta;
  if (cfg.noise.scheme == NoiseScheme::External) {
    noisy = *data.external_noisy;
  } else {
    noisy = apply_noise(data.train.labels, make_transition(cfg.noise, data.train.classes(), run.eta), noise_seed(run.seed, run.eta));
  }
  const double flips = flip_fraction(data.train.labels, noisy);
  if (cfg.noise.scheme == NoiseScheme::External) recorded_eta = flips;

  TrainConfig tc = cfg.train;
  tc.seed = run.seed;
  if (epochs_override) tc.epochs = *epochs_override;
  std::optional<AugmentPolicy> policy;
  if (run.augment == AugmentMode::AugMix) policy = cfg.policy;

  RunArtifacts out;
  out.trained = train(data.train.with_labels(noisy), tc, run.loss, policy, &data.test);
  out.realized_flip_fraction = flips;
  const double clean = clean_error(out.trained.params, data.test);
  const CorruptionErrors ce = mce(out.trained.params, suite, data.test.labels);
  out.report = make_run_report(fingerprint_for(cfg, run, recorded_eta), clean, ce);
  return out;
}

/// Grid search for one family under 20% symmetric noise; each point scored by mCE.
inline GridResult tune_family(const ExperimentConfig& cfg, const PreparedData& data, const CorruptedSuite& suite,
                              LossFamily family, AugmentMode augment, double lambda, std::uint64_t seed,
                              std::optional<std::size_t> epochs = std::nullopt) {
  ExperimentConfig tuning = cfg;
  tuning.noise.scheme = NoiseScheme::Symmetric;
  const auto space = search_space(family);
  std::vector<LossSpec> points;
  for (auto s : space) points.push_back(s.with_lambda(lambda));
  return grid_search(points, [&](const LossSpec& spec) {
    return execute_run(tuning, data, suite, {0.2, augment, spec, seed}, epochs).report.mce;
  });
}

// --- results files ---------------------------------------------------------

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string results_header(const std::vector<CorruptionKind>& kinds) {
  std::string h = "dataset,noise_scheme,eta,augment,loss_family,hyperparams,seed,clean_error,mce";
  for (auto k : kinds) h += "," + std::string(to_string(k));
  return h + ",timestamp";
}

/// One results.csv row; the timestamp is the final column.
inline std::string results_row(const RunReport& r, const std::string& timestamp) {
  const auto& f = r.fingerprint;
  std::string row = f.dataset + "," + f.noise_scheme + "," + RunFingerprint::format_eta(f.eta) + "," + f.augment + "," +
                    f.loss_family + "," + f.hyperparams + "," + std::to_string(f.seed) + "," + format_double(r.clean_error) +
                    "," + format_double(r.mce);
  for (const auto& [name, e] : r.per_corruption) row += "," + format_double(e);
  return row + "," + timestamp;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<RunReport> parse_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("results file is empty", 0);
  const auto header = split_csv_line(line);
  const std::vector<std::string> fixed = {"dataset", "noise_scheme", "eta", "augment", "loss_family",
                                          "hyperparams", "seed", "clean_error", "mce"};
  if (header.size() < fixed.size() + 1 || !std::equal(fixed.begin(), fixed.end(), header.begin()) || header.back() != "timestamp")
    throw ParseError("results header does not match the expected columns", 1);
  const std::vector<std::string> kinds(header.begin() + static_cast<std::ptrdiff_t>(fixed.size()), header.end() - 1);
  std::vector<RunReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw ParseError("line " + std::to_string(line_no) + ": wrong column count", line_no);
    try {
      RunReport r;
      r.fingerprint = {cells[0], cells[1], std::stod(cells[2]), cells[3], cells[4], cells[5], std::stoull(cells[6])};
      r.clean_error = std::stod(cells[7]);
      r.mce = std::stod(cells[8]);
      for (std::size_t i = 0; i < kinds.size(); ++i) r.per_corruption.emplace_back(kinds[i], std::stod(cells[fixed.size() + i]));
      r.validate();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return out;
}

inline std::vector<RunReport> load_results_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  return parse_results_csv(in);
}

// --- method-type view ------------------------------------------------------

/// Mean mCE of the four method types for one (dataset, scheme, eta) setting.
/// Robust entries average the per-family means of every non-CE family present.
struct MethodTypeRow {
  std::string setting;  // dataset|scheme|eta
  double eta = 0.0;
  std::optional<double> noaug_ce, noaug_robust, augmix_ce, augmix_robust;
};

inline std::vector<MethodTypeRow> method_types(const AggregateReport& agg) {
  std::map<std::string, MethodTypeRow> rows;
  std::map<std::string, std::map<std::string, std::vector<double>>> robust;  // setting -> augment -> means
  for (const auto& e : agg.entries) {
    const auto& c = e.config;
    const std::string setting = c.dataset + "|" + c.noise_scheme + "|" + RunFingerprint::format_eta(c.eta);
    auto& row = rows[setting];
    row.setting = setting;
    row.eta = c.eta;
    if (c.loss_family == "ce") {
      (c.augment == "augmix" ? row.augmix_ce : row.noaug_ce) = e.mce.mean;
    } else {
      robust[setting][c.augment].push_back(e.mce.mean);
    }
  }
  for (auto& [setting, by_aug] : robust)
    for (auto& [aug, means] : by_aug) {
      double s = 0.0;
      for (double m : means) s += m;
      (aug == "augmix" ? rows[setting].augmix_robust : rows[setting].noaug_robust) = s / static_cast<double>(means.size());
    }
  std::vector<MethodTypeRow> out;
  for (auto& [k, v] : rows) out.push_back(v);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.eta < b.eta; });
  return out;
}

inline nlohmann::json summary_json(const AggregateReport& agg) {
  using nlohmann::json;
  json groups = json::object();
  std::size_t n_corr = 0;
  for (const auto& e : agg.entries) {
    const auto& c = e.config;
    json per = json::object();
    for (const auto& [name, s] : e.per_corruption) per[name] = {{"mean", s.mean}, {"std", s.std}};
    groups[c.key()] = {
        {"dataset", c.dataset},
        {"noise_scheme", c.noise_scheme},
        {"eta", c.eta},
        {"augment", c.augment},
        {"loss_family", c.loss_family},
        {"hyperparams", c.hyperparams},
        {"n_seeds", e.n_seeds},
        {"single_seed", e.single_seed},
        {"mean", {{"clean_error", e.clean_error.mean}, {"mce", e.mce.mean}}},
        {"std", {{"clean_error", e.clean_error.std}, {"mce", e.mce.std}}},
        {"noisy_avg", e.noisy_avg ? json(*e.noisy_avg) : json(nullptr)},
        {"n_corruptions", e.n_corruptions},
        {"per_corruption", per},
    };
    n_corr = std::max(n_corr, e.n_corruptions);
  }
  json methods = json::array();
  for (const auto& r : method_types(agg)) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    methods.push_back({{"setting", r.setting},
                       {"noaug_ce", opt(r.noaug_ce)},
                       {"noaug_robust", opt(r.noaug_robust)},
                       {"augmix_ce", opt(r.augmix_ce)},
                       {"augmix_robust", opt(r.augmix_robust)}});
  }
  return {{"n_corruptions", n_corr}, {"groups", groups}, {"noisy_avg", agg.noisy_avg}, {"method_types", methods}};
}

/// Grouped bar chart: one group per noise setting, four bars per group.
inline std::string methods_svg(const std::vector<MethodTypeRow>& rows) {
  const double bar = 18, gap = 30, left = 60, top = 30, height = 240;
  const char* names[4] = {"NoAug+CE", "NoAug+Robust", "AugMix+CE", "AugMix+Robust"};
  const char* colors[4] = {"#9e9e9e", "#5c8fcc", "#e3a33b", "#3a9a5b"};
  const double width = left + rows.size() * (4 * bar + gap) + 160;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height + top + 60 << "\">\n";
  os << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">mCE by method type</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + height << "\" x2=\"" << width - 150 << "\" y2=\"" << top + height
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = top + height - height * t / 4.0;
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">"
       << t * 25 << "%</text>\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x0 = left + gap / 2 + i * (4 * bar + gap);
    const std::optional<double> vals[4] = {rows[i].noaug_ce, rows[i].noaug_robust, rows[i].augmix_ce, rows[i].augmix_robust};
    for (int j = 0; j < 4; ++j) {
      if (!vals[j]) continue;
      const double h = height * *vals[j];
      os << "<rect x=\"" << x0 + j * bar << "\" y=\"" << top + height - h << "\" width=\"" << bar - 2 << "\" height=\"" << h
         << "\" fill=\"" << colors[j] << "\"><title>" << names[j] << ": " << *vals[j] << "</title></rect>\n";
    }
    os << "<text x=\"" << x0 + 2 * bar << "\" y=\"" << top + height + 16
       << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">eta=" << RunFingerprint::format_eta(rows[i].eta)
       << "</text>\n";
  }
  for (int j = 0; j < 4; ++j) {
    const double y = top + 10 + j * 18;
    os << "<rect x=\"" << width - 140 << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\"" << colors[j] << "\"/>";
    os << "<text x=\"" << width - 122 << "\" y=\"" << y + 10 << "\" font-family=\"sans-serif\" font-size=\"11\">" << names[j]
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Writes `content` to a temporary sibling and renames it into place.
inline void write_atomically(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
  }
  fs::rename(tmp, path);
}

/// summary.json (and methods.svg when requested) from a list of reports.
inline void write_report(const std::vector<RunReport>& reports, const fs::path& out_dir, bool svg) {
  const AggregateReport agg = aggregate(reports);
  write_atomically(out_dir / "summary.json", summary_json(agg).dump(2) + "\n");
  if (svg) write_atomically(out_dir / "methods.svg", methods_svg(method_types(agg)));
}

// --- grid runner -----------------------------------------------------------

struct RunOptions {
  fs::path out_dir;
  bool force = false;
  std::size_t jobs = 1;
  std::uint64_t seed_offset = 0;
  bool svg = true;
};

struct RunFailure {
  std::size_t index = 0;
  RunFingerprint fingerprint;
  std::string message;
};

struct GridOutcome {
  std::vector<RunReport> reports;  // successful runs, grid order
  std::vector<RunFailure> failures;
  std::map<std::string, LossSpec> tuned;  // "augment|family" -> winner
};

/// Thrown when the output directory already holds results and force is off.
class OutputExistsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Expands the grid in (eta, augment, loss, seed) order.
inline std::vector<RunSpec> expand_grid(const ExperimentConfig& cfg, const std::map<std::string, LossSpec>& tuned,
                                        std::uint64_t seed_offset) {
  std::vector<RunSpec> out;
  const std::vector<double> etas = cfg.noise.scheme == NoiseScheme::External ? std::vector<double>{0.0} : cfg.noise.etas;
  for (double eta : etas)
    for (AugmentMode aug : cfg.augment)
      for (const auto& entry : cfg.losses) {
        LossSpec spec = entry.spec;
        if (entry.tune) {
          auto it = tuned.find(std::string(to_string(aug)) + "|" + std::string(to_string(spec.family)));
          if (it != tuned.end()) spec = it->second;
        }
        for (std::uint64_t s : cfg.seeds) out.push_back({eta, aug, spec, s + seed_offset});
      }
  return out;
}

/// Runs the whole experiment grid and writes results.csv, summary.json,
/// failures.csv (if any run failed) and optionally methods.svg.
inline GridOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  detail::require(!opt.out_dir.empty(), "an output directory is required");
  const fs::path results_path = opt.out_dir / "results.csv";
  if (fs::exists(results_path) && !opt.force)
    throw OutputExistsError("refusing to overwrite " + results_path.string() + " (pass --force)");
  fs::create_directories(opt.out_dir);
  for (const char* stale : {"results.csv", "summary.json", "failures.csv", "methods.svg", "tuning.csv"})
    fs::remove(opt.out_dir / stale);

  const PreparedData data = prepare_data(cfg.dataset);
  const CorruptedSuite suite = build_corrupted_suite(data.test.images, cfg.corruptions, cfg.corruption_seed);

  GridOutcome outcome;
  {
    std::ostringstream tuning_csv;
    bool any = false;
    tuning_csv << "augment,loss_family,hyperparams,mce,selected\n";
    for (AugmentMode aug : cfg.augment)
      for (const auto& entry : cfg.losses) {
        if (!entry.tune) continue;
        const std::string key = std::string(to_string(aug)) + "|" + std::string(to_string(entry.spec.family));
        if (outcome.tuned.count(key)) continue;
        const GridResult g = tune_family(cfg, data, suite, entry.spec.family, aug, entry.spec.lambda,
                                         cfg.seeds.front() + opt.seed_offset, cfg.tune_epochs);
        outcome.tuned[key] = g.best;
        for (const auto& p : g.points)
          tuning_csv << to_string(aug) << ',' << to_string(p.spec.family) << ',' << describe_hyperparams(p.spec) << ','
                     << format_double(p.score) << ',' << (p.spec == g.best ? 1 : 0) << '\n';
        any = true;
      }
    if (any) write_atomically(opt.out_dir / "tuning.csv", tuning_csv.str());
  }

  const std::vector<RunSpec> grid = expand_grid(cfg, outcome.tuned, opt.seed_offset);
  std::vector<std::optional<RunReport>> slots(grid.size());
  std::vector<bool> done(grid.size(), false);
  std::vector<RunFailure> failures;
  std::mutex mu;
  std::size_t flushed = 0;
  std::ofstream results(results_path, std::ios::binary);
  results << results_header(cfg.corruptions) << '\n';
  results.flush();

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      std::optional<RunReport> report;
      std::string error;
      try {
        RunArtifacts art = execute_run(cfg, data, suite, grid[i]);
        const std::string stem = "run_" + std::to_string(i);
        std::ostringstream hist;
        write_history_csv(hist, art.trained.history);
        write_atomically(opt.out_dir / "runs" / (stem + "_history.csv"), hist.str());
        if (cfg.save_checkpoints) save_checkpoint(art.trained.params, opt.out_dir / "runs" / (stem + ".agls"));
        report = std::move(art.report);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(mu);
      if (report) {
        slots[i] = std::move(report);
      } else {
        failures.push_back({i, fingerprint_for(cfg, grid[i], grid[i].eta), error});
      }
      done[i] = true;
      // Single writer: rows are appended strictly in grid order.
      while (flushed < grid.size() && done[flushed]) {
        if (slots[flushed]) results << results_row(*slots[flushed], utc_timestamp()) << '\n';
        ++flushed;
      }
      results.flush();
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(opt.jobs, grid.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  results.close();

  for (auto& s : slots)
    if (s) outcome.reports.push_back(std::move(*s));
  std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  outcome.failures = std::move(failures);
  if (!outcome.failures.empty()) {
    std::ostringstream f;
    f << "index,key,seed,message\n";
    for (const auto& fl : outcome.failures) {
      std::string msg = fl.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      f << fl.index << ',' << fl.fingerprint.key() << ',' << fl.fingerprint.seed << ',' << msg << '\n';
    }
    write_atomically(opt.out_dir / "failures.csv", f.str());
  }
  if (!outcome.reports.empty()) write_report(outcome.reports, opt.out_dir, opt.svg);
  return outcome;
}

}  // namespace augloss

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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "augloss/augloss.hpp"

namespace {

using namespace augloss;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

void note(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + what;
  }
}

// --- 1: gradients ----------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> cls(0, 9);
  const std::vector<std::pair<std::string, LossSpec>> families = {
      {"ce", LossSpec::ce()}, {"focal2", LossSpec::focal(2.0)}, {"nce_rce", LossSpec::nce_rce(1.0, 0.1, 4.0)},
      {"alpha2", LossSpec::alpha_loss(2.0)}};
  double worst = 0.0;
  for (const auto& [name, base] : families)
    for (double lambda : {0.0, 12.0}) {
      const LossSpec spec = base.with_lambda(lambda);
      for (int draw = 0; draw < 100; ++draw) {
        LogitTuple z{3, 10, std::vector<double>(30)};
        for (double& v : z.values) v = normal(rng);
        const std::size_t y = cls(rng);
        const auto g = loss_gradient(spec, z, y);
        double diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < z.values.size(); ++i) {
          const double h = 1e-5;
          LogitTuple up = z, down = z;
          up.values[i] += h;
          down.values[i] -= h;
          const double num = (objective_from_logits(spec, up, y) - objective_from_logits(spec, down, y)) / (2.0 * h);
          diff = std::max(diff, std::abs(g.values[i] - num));
          scale = std::max(scale, std::abs(num));
        }
        const double rel = diff / std::max(scale, 1e-8);
        worst = std::max(worst, rel);
        if (rel >= 1e-4) note(o, false, name + " lambda=" + fixed(lambda, 0) + " rel " + sci(rel));
      }
    }
  if (o.pass) o.detail = "max relative error " + sci(worst) + " over 800 draws";
  return o;
}

// --- 2: golden values --------------------------------------------------------

Outcome golden_values() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::gamma_distribution<double> g(1.0, 1.0);
  double focal_gap = 0.0, alpha_gap = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> p(10);
    double s = 0.0;
    for (double& v : p) s += (v = g(rng));
    for (double& v : p) v /= s;
    const Posterior post(p);
    const std::size_t y = static_cast<std::size_t>(i % 10);
    focal_gap = std::max(focal_gap, std::abs(focal_loss(post, y, 0.0) - ce_loss(post, y)));
    alpha_gap = std::max(alpha_gap, std::abs(alpha_loss(post, y, 1.0) - ce_loss(post, y)));
  }
  note(o, focal_gap <= 1e-12, "focal(0) vs CE gap " + sci(focal_gap));
  note(o, alpha_gap <= 1e-9, "alpha(1) vs CE gap " + sci(alpha_gap));

  const Posterior half({0.5, 0.5});
  note(o, std::abs(alpha_loss(half, 0, 0.5) - 1.0) <= 1e-9, "alpha(0.5) at p=0.5");
  note(o, std::abs(alpha_loss(half, 0, 2.0) - 2.0 * (1.0 - std::sqrt(0.5))) <= 1e-9, "alpha(2) at p=0.5");
  const Posterior u10 = Posterior::uniform(10);
  note(o, std::abs(rce_loss(u10, 3, 4.0) - 3.6) <= 1e-9, "RCE uniform K=10");
  for (std::size_t k : {2u, 5u, 10u})
    note(o, std::abs(nce_loss(Posterior::uniform(k), 0) - 1.0 / static_cast<double>(k)) <= 1e-9, "NCE uniform K=" + std::to_string(k));
  const PosteriorTuple hots(Posterior::one_hot(3, 0), {Posterior::one_hot(3, 1), Posterior::one_hot(3, 2)});
  note(o, std::abs(js_consistency(hots) - std::log(3.0)) <= 1e-9, "JS of three one-hots");
  if (o.pass) o.detail = "all closed forms within tolerance";
  return o;
}

// --- 3: label noise statistics -------------------------------------------------

Outcome noise_statistics() {
  Outcome o;
  const std::size_t n = 50000, k = 10;
  LabelSet clean;
  clean.k = k;
  for (std::size_t i = 0; i < n; ++i) clean.labels.push_back(i % k);

  std::string summary;
  for (double eta : {0.1, 0.2, 0.4}) {
    const auto t = symmetric_transition(k, eta);
    const auto noisy = apply_noise(clean, t, noise_seed(0, eta));
    const double frac = flip_fraction(clean, noisy);
    const double sigma = std::sqrt(eta * (1.0 - eta) / static_cast<double>(n));
    note(o, std::abs(frac - eta) <= 3.0 * sigma,
         "eta=" + fixed(eta, 1) + " flip fraction " + fixed(frac) + " outside 3 sigma");
    const auto emp = empirical_transition(clean, noisy);
    double dev = 0.0;
    for (std::size_t i = 0; i < k * k; ++i) dev = std::max(dev, std::abs(emp.entries()[i] - t.entries()[i]));
    note(o, dev <= 0.01, "eta=" + fixed(eta, 1) + " empirical transition off by " + fixed(dev));
    summary += (summary.empty() ? "" : ", ") + ("eta=" + fixed(eta, 1) + " flips " + fixed(frac) + " maxdev " + fixed(dev));
  }

  // truck->automobile, bird->airplane, deer->horse, cat->dog, dog->cat
  const std::map<std::size_t, std::size_t> mapped = {{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
  for (double eta : {0.2, 0.4}) {
    const auto t = asymmetric_transition_cifar10(eta);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double want = i == j ? 1.0 : 0.0;
        if (auto it = mapped.find(i); it != mapped.end()) {
          if (j == i) want = 1.0 - eta;
          if (j == it->second) want = eta;
        }
        note(o, t.at(i, j) == want, "asymmetric entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
  }
  o.detail = o.pass ? summary : o.detail + " [" + summary + "]";
  return o;
}

// --- 4: schedule and metrics -------------------------------------------------

Outcome schedule_and_metrics() {
  Outcome o;
  note(o, cosine_lr(0, 30, 0.1, 1e-6) == 0.1, "cosine start");
  note(o, cosine_lr(30, 30, 0.1, 1e-6) == 1e-6, "cosine end");
  const std::vector<double> kinds = {0.12, 0.34, 0.05, 0.27, 0.41, 0.18, 0.09, 0.33, 0.22, 0.15};
  double manual = 0.0;
  for (double v : kinds) manual += v;
  manual /= static_cast<double>(kinds.size());
  note(o, mean_corruption_error(kinds) == manual, "mCE is not the arithmetic mean");
  const auto avg = noisy_average({{0.0, 0.9}, {0.1, 0.1}, {0.2, 0.2}, {0.4, 0.3}});
  note(o, avg.has_value() && *avg == (0.1 + 0.2 + 0.3) / 3.0, "noisy average includes eta=0");

  std::vector<RunReport> rs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    RunReport r;
    r.fingerprint = {"synthetic", "symmetric", 0.2, "noaug", "ce", "-", s};
    r.clean_error = 0.1 * static_cast<double>(s + 1);
    r.per_corruption = {{"contrast", r.clean_error}};
    r.mce = r.clean_error;
    rs.push_back(r);
  }
  const auto agg = aggregate(rs);
  note(o, std::abs(agg.entries[0].clean_error.mean - 0.2) <= 1e-12 && std::abs(agg.entries[0].clean_error.std - 0.1) <= 1e-12,
       "aggregate mean/std of (10,20,30)%");
  if (o.pass) o.detail = "cosine endpoints, mCE, noisy average and sample std exact";
  return o;
}

// --- 5: augmentation invariants ----------------------------------------------

Outcome augmentation_invariants() {
  Outcome o;
  const ImageTensor x = synth_template(3, 32);
  const AugmentPolicy policy;
  std::size_t in_range = 0, changed = 0, repeatable = 0;
  const std::size_t draws = 1000;
  for (std::size_t s = 0; s < draws; ++s) {
    const auto t = augment_tuple(x, policy, s);
    bool ok = t.orig == x;
    for (const ImageTensor* img : {&t.aug1, &t.aug2}) {
      ok = ok && img->same_shape(x);
      for (double v : img->data()) ok = ok && v >= 0.0 && v <= 1.0;
    }
    in_range += ok;
    changed += max_abs_diff(t.aug1, x) > 1e-3 && max_abs_diff(t.aug2, x) > 1e-3;
    const auto again = augment_tuple(x, policy, s);
    repeatable += again.aug1 == t.aug1 && again.aug2 == t.aug2;
  }
  note(o, in_range == draws, "range/shape held in " + std::to_string(in_range) + "/1000");
  note(o, changed >= 950, "augmented views differ in only " + std::to_string(changed) + "/1000");
  note(o, repeatable == draws, "determinism held in " + std::to_string(repeatable) + "/1000");
  if (o.pass)
    o.detail = "range " + std::to_string(in_range) + "/1000, changed " + std::to_string(changed) + "/1000, repeatable " +
               std::to_string(repeatable) + "/1000";
  return o;
}

// --- 6-8: trend experiments ----------------------------------------------------

struct DeskSetup {
  ExperimentConfig cfg;
  PreparedData data;
  CorruptedSuite suite;
};

DeskSetup& desk() {
  static DeskSetup d = [] {
    DeskSetup s;
    s.cfg.dataset.synth.k = 10;
    s.cfg.dataset.synth.n_per_class = 500;
    s.cfg.dataset.synth.side = 16;
    s.cfg.dataset.test_per_class = 100;
    s.cfg.train.epochs = 30;
    s.cfg.train.lr0 = 0.02;
    s.cfg.train.hidden = {256};
    s.data = prepare_data(s.cfg.dataset);
    s.suite = build_corrupted_suite(s.data.test.images, s.cfg.corruptions, s.cfg.corruption_seed);
    return s;
  }();
  return d;
}

struct MethodScore {
  double clean = 0.0;
  double mce = 0.0;
};

MethodScore mean_over_seeds(double eta, AugmentMode mode, const LossSpec& loss) {
  auto& d = desk();
  MethodScore m;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto r = execute_run(d.cfg, d.data, d.suite, {eta, mode, loss, seed}).report;
    m.clean += r.clean_error / 3.0;
    m.mce += r.mce / 3.0;
  }
  return m;
}

Outcome trend_robust_loss() {
  Outcome o;
  const auto ce = mean_over_seeds(0.4, AugmentMode::NoAug, LossSpec::ce());
  const auto alpha = mean_over_seeds(0.4, AugmentMode::NoAug, LossSpec::alpha_loss(3.0));
  note(o, ce.clean - alpha.clean >= 0.02, "margin below 2 points");
  o.detail = "clean error CE " + fixed(ce.clean) + " vs alpha(3) " + fixed(alpha.clean) + (o.pass ? "" : " " + o.detail);
  return o;
}

Outcome trend_method_ordering() {
  Outcome o;
  auto& d = desk();
  const double lambda = LossSpec{}.lambda;
  const auto tuned = tune_family(d.cfg, d.data, d.suite, LossFamily::Alpha, AugmentMode::AugMix, lambda, 0, 10);
  const auto noaug_ce = mean_over_seeds(0.2, AugmentMode::NoAug, LossSpec::ce());
  const auto noaug_rob = mean_over_seeds(0.2, AugmentMode::NoAug, LossSpec::alpha_loss(3.0));
  const auto augmix_ce = mean_over_seeds(0.2, AugmentMode::AugMix, LossSpec::ce().with_lambda(lambda));
  const auto augmix_rob = mean_over_seeds(0.2, AugmentMode::AugMix, tuned.best);
  note(o, augmix_ce.mce - augmix_rob.mce >= 0.01, "AugMix+Robust not 1 point below AugMix+CE");
  note(o, noaug_ce.mce - augmix_ce.mce >= 0.01, "AugMix+CE not 1 point below NoAug+CE");
  note(o, augmix_rob.mce <= noaug_rob.mce, "AugMix+Robust above NoAug+Robust");
  const std::string scores = "mCE NoAug+CE " + fixed(noaug_ce.mce) + ", NoAug+alpha(3) " + fixed(noaug_rob.mce) +
                             ", AugMix+CE " + fixed(augmix_ce.mce) + ", AugMix+alpha(" + fixed(tuned.best.alpha, 1) +
                             ") " + fixed(augmix_rob.mce);
  o.detail = o.pass ? scores : o.detail + " [" + scores + "]";
  return o;
}

Outcome sweep_protocol() {
  Outcome o;
  auto& d = desk();
  const std::size_t epochs = 10;
  const auto first = tune_family(d.cfg, d.data, d.suite, LossFamily::Alpha, AugmentMode::NoAug, 0.0, 0, epochs);
  const auto second = tune_family(d.cfg, d.data, d.suite, LossFamily::Alpha, AugmentMode::NoAug, 0.0, 0, epochs);
  const auto space = search_space(LossFamily::Alpha);
  note(o, first.points.size() == 9 && space.size() == 9, "grid does not have 9 points");
  std::set<double> seen;
  for (const auto& p : first.points) seen.insert(p.spec.alpha);
  std::set<double> expected;
  for (const auto& s : space) expected.insert(s.alpha);
  note(o, seen == expected, "grid points differ from the search space");
  note(o, first.best.alpha == second.best.alpha && first.best_score == second.best_score, "rerun picked a different winner");
  bool same_scores = first.points.size() == second.points.size();
  for (std::size_t i = 0; same_scores && i < first.points.size(); ++i) same_scores = first.points[i].score == second.points[i].score;
  note(o, same_scores, "rerun scores differ");
  if (o.pass) o.detail = "9 points, winner alpha=" + fixed(first.best.alpha, 1) + " (mCE " + fixed(first.best_score) + ") on both runs";
  return o;
}

// --- 9: end-to-end determinism -------------------------------------------------

std::string without_last_column(const fs::path& csv) {
  std::ifstream in(csv);
  std::string out;
  for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Outcome grid_determinism(const fs::path& workdir) {
  Outcome o;
  const auto cfg = load_config(fs::path(AUGLOSS_SOURCE_DIR) / "configs" / "minimal.toml");
  std::string csv[2];
  for (int i = 0; i < 2; ++i) {
    RunOptions opt;
    opt.out_dir = workdir / ("minimal_" + std::to_string(i));
    opt.force = true;
    run_experiment(cfg, opt);
    csv[i] = without_last_column(opt.out_dir / "results.csv");
  }
  note(o, !csv[0].empty() && csv[0] == csv[1], "results.csv differs between runs");
  if (o.pass) o.detail = "results.csv identical apart from timestamps";
  return o;
}

// --- 10: CIFAR-10 binary loader --------------------------------------------------

Outcome cifar_loader(const fs::path& workdir) {
  Outcome o;
  std::vector<unsigned char> bytes;
  for (unsigned char label : {6, 2}) {
    bytes.push_back(label);
    for (std::size_t j = 0; j < 3 * 1024; ++j) bytes.push_back(static_cast<unsigned char>((j * 31 + label) % 256));
  }
  fs::create_directories(workdir);
  const fs::path fixture = workdir / "two_records.bin";
  const fs::path copy = workdir / "two_records_copy.bin";
  const fs::path truncated = workdir / "truncated.bin";
  std::ofstream(fixture, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  std::ofstream(truncated, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), 3072);

  const auto ds = load_cifar10_binary({fixture});
  note(o, ds.size() == 2 && ds.labels[0] == 6 && ds.labels[1] == 2, "labels");
  write_cifar10_binary(ds, copy);
  std::ifstream in(copy, std::ios::binary);
  const std::vector<unsigned char> back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  note(o, back == bytes, "re-serialized bytes differ");
  try {
    load_cifar10_binary({truncated});
    note(o, false, "truncated file accepted");
  } catch (const ParseError& e) {
    note(o, e.location() == 0 && std::string(e.what()).find("offset 0") != std::string::npos,
         std::string("unexpected error: ") + e.what());
  }
  if (o.pass) o.detail = "2-record fixture round-trips; truncated file rejected at offset 0";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance checks");
  fs::path workdir = fs::temp_directory_path() / "augloss_acceptance";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for generated files");
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, gradient_correctness},
      {2, golden_values},
      {3, noise_statistics},
      {4, schedule_and_metrics},
      {5, augmentation_invariants},
      {6, trend_robust_loss},
      {7, trend_method_ordering},
      {8, sweep_protocol},
      {9, [&] { return grid_determinism(workdir); }},
      {10, [&] { return cifar_loader(workdir); }},
  };

  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << " (" << fixed(secs, 1)
              << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

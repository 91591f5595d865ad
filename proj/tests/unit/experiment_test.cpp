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

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "augloss/experiment.hpp"
#include "test_support.hpp"

namespace {

using namespace augloss;
using augloss::testing::slurp;
using augloss::testing::TempDir;

// Small enough that a run takes a few milliseconds.
std::string tiny_config(const std::string& etas, const std::string& modes, const std::string& losses,
                        const std::string& seeds, const std::string& extra = "") {
  return R"([dataset]
kind = "synthetic"
classes = 4
train_per_class = 12
test_per_class = 4
side = 8
seed = 3

[noise]
scheme = "symmetric"
etas = )" + etas + R"(

[augment]
modes = )" + modes + R"(
width = 2

)" + losses + R"(
[train]
epochs = 2
batch_size = 8
lr0 = 0.02
hidden = [8]

[corruptions]
kinds = ["gaussian_noise", "contrast"]

[run]
seeds = )" + seeds + "\n" + extra;
}

const std::string kCe = "[[loss]]\nfamily = \"ce\"\n";
const std::string kCeAlpha = "[[loss]]\nfamily = \"ce\"\n\n[[loss]]\nfamily = \"alpha\"\nalpha = 3.0\n";

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string strip_timestamps(const std::string& csv) {
  std::string out;
  for (const auto& l : lines(csv)) out += l.substr(0, l.rfind(',')) + "\n";
  return out;
}

RunOptions options(const std::filesystem::path& dir) {
  RunOptions o;
  o.out_dir = dir;
  return o;
}

TEST(Config, ParsesEveryTable) {
  const auto cfg = parse_config(tiny_config("[0.0, 0.2]", R"(["noaug", "augmix"])", kCeAlpha, "[0, 1, 2]"));
  EXPECT_EQ(cfg.dataset.synth.k, 4u);
  EXPECT_EQ(cfg.noise.etas, (std::vector<double>{0.0, 0.2}));
  EXPECT_EQ(cfg.augment, (std::vector<AugmentMode>{AugmentMode::NoAug, AugmentMode::AugMix}));
  EXPECT_EQ(cfg.policy.width, 2u);
  ASSERT_EQ(cfg.losses.size(), 2u);
  EXPECT_EQ(cfg.losses[1].spec.family, LossFamily::Alpha);
  EXPECT_EQ(cfg.losses[1].spec.alpha, 3.0);
  EXPECT_EQ(cfg.train.hidden, (std::vector<std::size_t>{8}));
  EXPECT_EQ(cfg.corruptions.size(), 2u);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
}

TEST(Config, ShippedExamplesLoad) {
  for (const char* name : {"example.toml", "minimal.toml"}) {
    const auto path = std::filesystem::path(AUGLOSS_SOURCE_DIR) / "configs" / name;
    EXPECT_NO_THROW(load_config(path)) << name;
  }
}

TEST(Config, AlphaInfinityAndSuperclassGroups) {
  const auto cfg = parse_config(
      "[dataset]\nclasses = 4\n[noise]\nscheme = \"superclass\"\netas = [0.2]\ngroups = [[0, 1], [2, 3]]\n"
      "[[loss]]\nfamily = \"alpha\"\nalpha = \"inf\"\n");
  EXPECT_TRUE(std::isinf(cfg.losses[0].spec.alpha));
  ASSERT_TRUE(cfg.noise.partition.has_value());
  EXPECT_EQ(cfg.noise.partition->groups().size(), 2u);
}

void expect_error_at_line(const std::string& text, std::size_t line, const std::string& fragment) {
  try {
    parse_config(text, "cfg.toml");
    FAIL() << "expected a parse error for: " << text;
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), line) << e.what();
    EXPECT_NE(std::string(e.what()).find("cfg.toml:" + std::to_string(line) + ":"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Config, ErrorsCarryLineNumbers) {
  expect_error_at_line("[dataset]\nkind = \"synthetic\"\n\nclasses = \"ten\"\n", 4, "integer");
  expect_error_at_line("[noise]\netas = [0.1,\n  1.5]\n", 2, "[0, 1]");
  expect_error_at_line("[train]\nepochs = 3\nlearning_rate = 0.1\n", 3, "unknown key");
  expect_error_at_line("[[loss]]\nfamily = \"hinge\"\n", 2, "hinge");
  expect_error_at_line("[dataset]\nkind = = 1\n", 2, "");
  expect_error_at_line("[[loss]]\nfamily = \"focal\"\ngamma = 9.0\n", 1, "gamma");
  expect_error_at_line("[run]\nseeds = []\n", 2, "seed");
  expect_error_at_line("[noise]\nscheme = \"external\"\n", 1, "external_labels");
}

TEST(Grid, MinimalConfigWritesOneRow) {
  TempDir dir("grid");
  const auto cfg = parse_config(tiny_config("[0.0]", R"(["noaug"])", kCe, "[0]"));
  const auto outcome = run_experiment(cfg, options(dir.path()));
  EXPECT_TRUE(outcome.failures.empty());
  const auto rows = lines(slurp(dir.path() / "results.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "dataset,noise_scheme,eta,augment,loss_family,hyperparams,seed,clean_error,mce,gaussian_noise,contrast,timestamp");
  EXPECT_EQ(rows[1].rfind("synthetic,symmetric,0,noaug,ce,-,0,", 0), 0u) << rows[1];
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "summary.json"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "methods.svg"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "runs" / "run_0_history.csv"));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "failures.csv"));
}

TEST(Grid, ProductCardinalityAndOrder) {
  TempDir dir("grid");
  const auto cfg = parse_config(tiny_config("[0.0, 0.4]", R"(["noaug", "augmix"])", kCeAlpha, "[0, 1, 2]"));
  RunOptions opt = options(dir.path());
  opt.jobs = 3;
  const auto outcome = run_experiment(cfg, opt);
  EXPECT_EQ(outcome.reports.size(), 24u);
  const auto rows = lines(slurp(dir.path() / "results.csv"));
  ASSERT_EQ(rows.size(), 25u);
  // eta, augment, loss, seed: the seed cycles fastest.
  EXPECT_EQ(rows[1].rfind("synthetic,symmetric,0,noaug,ce,-,0,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("synthetic,symmetric,0,noaug,ce,-,1,", 0), 0u);
  EXPECT_EQ(rows[4].rfind("synthetic,symmetric,0,noaug,alpha,alpha=3,0,", 0), 0u);
  EXPECT_EQ(rows[7].rfind("synthetic,symmetric,0,augmix,ce,lambda=12,0,", 0), 0u);
  EXPECT_EQ(rows[24].rfind("synthetic,symmetric,0.4,augmix,alpha,alpha=3;lambda=12,2,", 0), 0u);
  for (const auto& r : outcome.reports) EXPECT_NO_THROW(r.validate());

  const auto summary = nlohmann::json::parse(slurp(dir.path() / "summary.json"));
  EXPECT_EQ(summary["n_corruptions"], 2);
  const auto& g = summary["groups"]["synthetic|symmetric|0.4|noaug|ce|-"];
  EXPECT_EQ(g["n_seeds"], 3);
  EXPECT_FALSE(g["single_seed"].get<bool>());
  EXPECT_TRUE(g["std"]["mce"].is_number());
  EXPECT_TRUE(g["noisy_avg"].is_number());
  EXPECT_EQ(summary["method_types"].size(), 2u);
}

TEST(Grid, RerunIsRefusedUnlessForced) {
  TempDir dir("grid");
  const auto cfg = parse_config(tiny_config("[0.0]", R"(["noaug"])", kCe, "[0]"));
  run_experiment(cfg, options(dir.path()));
  const std::string first = slurp(dir.path() / "results.csv");
  EXPECT_THROW(run_experiment(cfg, options(dir.path())), OutputExistsError);
  EXPECT_EQ(slurp(dir.path() / "results.csv"), first);
  RunOptions forced = options(dir.path());
  forced.force = true;
  EXPECT_NO_THROW(run_experiment(cfg, forced));
}

TEST(Grid, DeterministicAcrossRunsAndJobCounts) {
  TempDir a("det"), b("det");
  const auto cfg = parse_config(tiny_config("[0.0, 0.2]", R"(["noaug", "augmix"])", kCeAlpha, "[0, 1]"));
  run_experiment(cfg, options(a.path()));
  RunOptions parallel = options(b.path());
  parallel.jobs = 4;
  run_experiment(cfg, parallel);
  EXPECT_EQ(strip_timestamps(slurp(a.path() / "results.csv")), strip_timestamps(slurp(b.path() / "results.csv")));
  EXPECT_EQ(slurp(a.path() / "summary.json"), slurp(b.path() / "summary.json"));
}

TEST(Grid, SeedOffsetShiftsSeeds) {
  TempDir dir("grid");
  const auto cfg = parse_config(tiny_config("[0.0]", R"(["noaug"])", kCe, "[0]"));
  RunOptions opt = options(dir.path());
  opt.seed_offset = 5;
  const auto outcome = run_experiment(cfg, opt);
  ASSERT_EQ(outcome.reports.size(), 1u);
  EXPECT_EQ(outcome.reports[0].fingerprint.seed, 5u);
}

TEST(Results, CsvRoundTripAndReportRecomputation) {
  TempDir dir("grid");
  const auto cfg = parse_config(tiny_config("[0.0, 0.2]", R"(["noaug"])", kCeAlpha, "[0, 1]"));
  const auto outcome = run_experiment(cfg, options(dir.path()));
  const auto loaded = load_results_csv(dir.path() / "results.csv");
  ASSERT_EQ(loaded.size(), outcome.reports.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].fingerprint.key(), outcome.reports[i].fingerprint.key());
    EXPECT_EQ(loaded[i].fingerprint.seed, outcome.reports[i].fingerprint.seed);
    EXPECT_EQ(loaded[i].clean_error, outcome.reports[i].clean_error);
    EXPECT_EQ(loaded[i].mce, outcome.reports[i].mce);
    EXPECT_EQ(loaded[i].per_corruption, outcome.reports[i].per_corruption);
  }
  TempDir again("report");
  write_report(loaded, again.path(), true);
  EXPECT_EQ(slurp(again.path() / "summary.json"), slurp(dir.path() / "summary.json"));
}

TEST(Results, ParserRejectsMalformedFiles) {
  std::istringstream empty("");
  EXPECT_THROW(parse_results_csv(empty), ParseError);
  std::istringstream header("a,b,c\n");
  EXPECT_THROW(parse_results_csv(header), ParseError);
  std::istringstream bad_mce(
      "dataset,noise_scheme,eta,augment,loss_family,hyperparams,seed,clean_error,mce,contrast,timestamp\n"
      "synthetic,symmetric,0,noaug,ce,-,0,0.1,0.5,0.4,t\n");
  try {
    parse_results_csv(bad_mce);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 2u);
  }
}

TEST(Grid, FailedRunIsIsolated) {
  TempDir dir("fail");
  // An absurd beta overflows the loss, so that cell fails while CE completes.
  const std::string losses = kCe + "\n[[loss]]\nfamily = \"nce_rce\"\nbeta1 = 1e308\nbeta2 = 1e308\n";
  const auto cfg = parse_config(tiny_config("[0.0]", R"(["noaug"])", losses, "[0, 1]"));
  const auto outcome = run_experiment(cfg, options(dir.path()));
  EXPECT_EQ(outcome.reports.size(), 2u);
  ASSERT_EQ(outcome.failures.size(), 2u);
  EXPECT_EQ(outcome.failures[0].index, 2u);
  EXPECT_EQ(lines(slurp(dir.path() / "results.csv")).size(), 3u);
  const auto failures = lines(slurp(dir.path() / "failures.csv"));
  ASSERT_EQ(failures.size(), 3u);
  EXPECT_EQ(failures[0], "index,key,seed,message");
  EXPECT_NE(failures[1].find("non-finite"), std::string::npos) << failures[1];
}

TEST(Grid, TunedLossUsesGridWinner) {
  TempDir dir("tune");
  const std::string losses = "[[loss]]\nfamily = \"alpha\"\ntune = true\n";
  const auto cfg = parse_config(tiny_config("[0.2]", R"(["noaug"])", losses, "[0]", ""));
  const auto outcome = run_experiment(cfg, options(dir.path()));
  ASSERT_EQ(outcome.tuned.count("noaug|alpha"), 1u);
  const auto tuning = lines(slurp(dir.path() / "tuning.csv"));
  ASSERT_EQ(tuning.size(), 10u);
  std::size_t selected = 0;
  for (std::size_t i = 1; i < tuning.size(); ++i) selected += tuning[i].back() == '1';
  EXPECT_EQ(selected, 1u);
  ASSERT_EQ(outcome.reports.size(), 1u);
  EXPECT_EQ(outcome.reports[0].fingerprint.hyperparams, describe_hyperparams(outcome.tuned.at("noaug|alpha")));
}

TEST(Grid, ExternalLabelsRecordRealizedFlipFraction) {
  TempDir dir("ext");
  // 48 training examples with class i % 4; flip the first 12.
  {
    std::ofstream os(dir.path() / "noisy.csv");
    os << "index,label\n";
    for (int i = 0; i < 48; ++i) os << i << ',' << (i < 12 ? (i + 1) % 4 : i % 4) << '\n';
  }
  std::string text = tiny_config("[0.0]", R"(["noaug"])", kCe, "[0]");
  text.replace(text.find("seed = 3"), 8, "seed = 3\nexternal_labels = \"noisy.csv\"");
  text.replace(text.find("scheme = \"symmetric\""), 20, "scheme = \"external\"");
  const auto cfg = parse_config(text, "ext.toml", dir.path());
  const auto outcome = run_experiment(cfg, options(dir.path() / "out"));
  ASSERT_EQ(outcome.reports.size(), 1u);
  EXPECT_EQ(outcome.reports[0].fingerprint.noise_scheme, "external");
  EXPECT_DOUBLE_EQ(outcome.reports[0].fingerprint.eta, 0.25);
}

TEST(Report, MethodTypesAverageRobustFamilies) {
  std::vector<RunReport> rs;
  auto add = [&](const std::string& aug, const std::string& fam, double m) {
    RunReport r;
    r.fingerprint = {"synthetic", "symmetric", 0.2, aug, fam, "-", 0};
    r.clean_error = 0.1;
    r.per_corruption = {{"contrast", m}};
    r.mce = m;
    rs.push_back(r);
  };
  add("noaug", "ce", 0.4);
  add("noaug", "alpha", 0.3);
  add("noaug", "focal", 0.2);
  add("augmix", "ce", 0.25);
  add("augmix", "nce_rce", 0.15);
  const auto rows = method_types(aggregate(rs));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(*rows[0].noaug_ce, 0.4);
  EXPECT_DOUBLE_EQ(*rows[0].noaug_robust, 0.25);
  EXPECT_DOUBLE_EQ(*rows[0].augmix_ce, 0.25);
  EXPECT_DOUBLE_EQ(*rows[0].augmix_robust, 0.15);
  const std::string svg = methods_svg(rows);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("AugMix+Robust"), std::string::npos);
}

}  // namespace

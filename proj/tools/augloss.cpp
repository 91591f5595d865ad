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

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "augloss/augloss.hpp"

namespace {

using namespace augloss;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitRefused = 2;
constexpr int kExitPartial = 3;

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("AUGLOSS_OUT"); env != nullptr && *env != '\0') return env;
  throw ArgumentError("no output directory: pass --out or set AUGLOSS_OUT");
}

json fingerprint_json(const RunFingerprint& f) {
  return {{"dataset", f.dataset},         {"noise_scheme", f.noise_scheme}, {"eta", f.eta},  {"augment", f.augment},
          {"loss_family", f.loss_family}, {"hyperparams", f.hyperparams},   {"seed", f.seed}};
}

RunFingerprint fingerprint_from_json(const json& j) {
  return {j.at("dataset"),     j.at("noise_scheme"), j.at("eta"), j.at("augment"),
          j.at("loss_family"), j.at("hyperparams"),  j.at("seed")};
}

json report_json(const RunReport& r) {
  json per = json::object();
  for (const auto& [k, v] : r.per_corruption) per[k] = v;
  return {{"fingerprint", fingerprint_json(r.fingerprint)}, {"clean_error", r.clean_error}, {"mce", r.mce}, {"per_corruption", per}};
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string config, out;
  bool force = false, no_svg = false;
  std::size_t jobs = 1;
  std::uint64_t seed_offset = 0;
};

int cmd_run(const RunArgs& a) {
  const ExperimentConfig cfg = load_config(a.config);
  RunOptions opt{output_dir(a.out), a.force, a.jobs, a.seed_offset, !a.no_svg};
  GridOutcome res;
  try {
    res = run_experiment(cfg, opt);
  } catch (const OutputExistsError& e) {
    std::cerr << "augloss: " << e.what() << '\n';
    return kExitRefused;
  }
  for (const auto& [key, spec] : res.tuned) std::cout << "tuned " << key << ": " << describe_hyperparams(spec) << '\n';
  std::cout << res.reports.size() << " run(s) written to " << (opt.out_dir / "results.csv").string() << '\n';
  if (!res.failures.empty()) {
    for (const auto& f : res.failures) std::cerr << "run " << f.index << " failed: " << f.message << '\n';
    std::cerr << res.failures.size() << " run(s) failed; see failures.csv\n";
    return kExitPartial;
  }
  return kExitOk;
}

// --- gen-noise -------------------------------------------------------------

struct NoiseArgs {
  std::string scheme = "symmetric", labels, out;
  std::size_t k = 10, group_size = 5;
  bool cifar100 = false;
  double eta = 0.0;
  std::uint64_t seed = 0;
};

int cmd_gen_noise(const NoiseArgs& a) {
  NoiseConfig nc;
  nc.scheme = parse_noise_scheme(a.scheme);
  if (nc.scheme == NoiseScheme::External) throw ArgumentError("gen-noise cannot generate the external scheme");
  std::size_t k = a.k;
  if (nc.scheme == NoiseScheme::Superclass) {
    nc.partition = a.cifar100 ? cifar100_superclasses() : SuperclassPartition::contiguous(k, a.group_size);
    k = nc.partition->k();
  }
  const TransitionMatrix t = make_transition(nc, k, a.eta);
  if (a.out.empty() && a.labels.empty() && std::getenv("AUGLOSS_OUT") == nullptr) {
    write_transition_csv(std::cout, t);
    return kExitOk;
  }
  const fs::path dir = output_dir(a.out);
  std::ostringstream matrix;
  write_transition_csv(matrix, t);
  write_atomically(dir / "transition.csv", matrix.str());
  if (!a.labels.empty()) {
    std::ifstream in(a.labels);
    if (!in) throw ParseError("cannot open " + a.labels, 0);
    // The expected length is the number of nonblank data rows in the file itself.
    std::stringstream buf;
    buf << in.rdbuf();
    std::size_t rows = 0;
    std::string line;
    for (std::istringstream scan(buf.str()); std::getline(scan, line);)
      rows += !(line.empty() || line == "\r");
    std::istringstream again(buf.str());
    const LabelSet clean = parse_external_labels(again, rows == 0 ? 0 : rows - 1, k);
    const LabelSet noisy = apply_noise(clean, t, a.seed);
    std::ostringstream os;
    write_labels_csv(os, noisy);
    write_atomically(dir / "noisy_labels.csv", os.str());
    std::cout << "realized flip fraction " << flip_fraction(clean, noisy) << '\n';
  }
  std::cout << "wrote " << (dir / "transition.csv").string() << '\n';
  return kExitOk;
}

// --- augment-preview -------------------------------------------------------

struct PreviewArgs {
  std::string input, out;
  std::size_t synthetic_class = 0, side = 32;
  int severity = 3;
  std::uint64_t seed = 0;
};

int cmd_augment_preview(const PreviewArgs& a) {
  const ImageTensor x = a.input.empty() ? synth_template(a.synthetic_class, a.side) : read_ppm(a.input);
  AugmentPolicy policy;
  policy.severity = a.severity;
  const AugmentedTuple t = augment_tuple(x, policy, a.seed);
  const fs::path dir = output_dir(a.out);
  write_ppm(dir / "orig.ppm", t.orig);
  write_ppm(dir / "aug1.ppm", t.aug1);
  write_ppm(dir / "aug2.ppm", t.aug2);
  std::cout << "wrote orig.ppm, aug1.ppm, aug2.ppm to " << dir.string() << '\n';
  return kExitOk;
}

// --- train / eval ----------------------------------------------------------

struct TrainArgs {
  std::string config, out, augment, loss;
  std::optional<double> eta;
  std::optional<std::uint64_t> seed;
};

RunSpec pick_run(const ExperimentConfig& cfg, const TrainArgs& a) {
  RunSpec run;
  run.eta = a.eta.value_or(cfg.noise.etas.front());
  run.augment = a.augment.empty() ? cfg.augment.front() : parse_augment_mode(a.augment);
  run.seed = a.seed.value_or(cfg.seeds.front());
  run.loss = cfg.losses.front().spec;
  if (!a.loss.empty()) {
    const LossFamily fam = parse_loss_family(a.loss);
    auto it = std::find_if(cfg.losses.begin(), cfg.losses.end(), [&](const LossEntry& e) { return e.spec.family == fam; });
    if (it == cfg.losses.end()) throw ArgumentError("config has no [[loss]] entry for family " + a.loss);
    run.loss = it->spec;
  }
  return run;
}

int cmd_train(const TrainArgs& a) {
  const ExperimentConfig cfg = load_config(a.config);
  const RunSpec run = pick_run(cfg, a);
  const fs::path dir = output_dir(a.out);
  const PreparedData data = prepare_data(cfg.dataset);
  const CorruptedSuite suite = build_corrupted_suite(data.test.images, cfg.corruptions, cfg.corruption_seed);
  const RunArtifacts art = execute_run(cfg, data, suite, run);
  save_checkpoint(art.trained.params, dir / "model.agls");
  std::ostringstream hist;
  write_history_csv(hist, art.trained.history);
  write_atomically(dir / "history.csv", hist.str());
  json meta = report_json(art.report);
  meta["realized_flip_fraction"] = art.realized_flip_fraction;
  write_atomically(dir / "run.json", meta.dump(2) + "\n");
  std::cout << "clean_error " << art.report.clean_error << "  mce " << art.report.mce << '\n';
  std::cout << "checkpoint " << (dir / "model.agls").string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string config, checkpoint, out;
};

int cmd_eval(const EvalArgs& a) {
  const ExperimentConfig cfg = load_config(a.config);
  const ModelParams params = load_checkpoint(a.checkpoint);
  const PreparedData data = prepare_data(cfg.dataset);
  if (params.input_dim() != data.test.feature_dim() || params.classes() != data.test.classes())
    throw ArgumentError("checkpoint shape does not match the configured test data");
  RunFingerprint fp{cfg.dataset.name(), std::string(to_string(cfg.noise.scheme)), 0.0, "unknown", "unknown", "-", 0};
  const fs::path meta_path = fs::path(a.checkpoint).parent_path() / "run.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    fp = fingerprint_from_json(json::parse(in).at("fingerprint"));
  }
  const CorruptedSuite suite = build_corrupted_suite(data.test.images, cfg.corruptions, cfg.corruption_seed);
  const RunReport r = make_run_report(fp, clean_error(params, data.test), mce(params, suite, data.test.labels));
  r.validate();
  const fs::path dir = output_dir(a.out);
  write_atomically(dir / "report.json", report_json(r).dump(2) + "\n");
  std::cout << "clean_error " << r.clean_error << "  mce " << r.mce << '\n';
  return kExitOk;
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
  std::string config, out, family, augment;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

int cmd_sweep(const SweepArgs& a) {
  const ExperimentConfig cfg = load_config(a.config);
  const LossFamily fam = parse_loss_family(a.family);
  const AugmentMode aug = a.augment.empty() ? cfg.augment.front() : parse_augment_mode(a.augment);
  const std::uint64_t seed = a.seed.value_or(cfg.seeds.front());
  const fs::path dir = output_dir(a.out);
  double lambda = LossSpec{}.lambda;
  for (const auto& e : cfg.losses)
    if (e.spec.family == fam) lambda = e.spec.lambda;
  const PreparedData data = prepare_data(cfg.dataset);
  const CorruptedSuite suite = build_corrupted_suite(data.test.images, cfg.corruptions, cfg.corruption_seed);
  const auto epochs = a.epochs ? a.epochs : cfg.tune_epochs;
  const GridResult g = tune_family(cfg, data, suite, fam, aug, lambda, seed, epochs);

  std::ostringstream csv;
  csv << "hyperparams,mce,selected\n";
  json points = json::array();
  for (const auto& p : g.points) {
    const bool sel = p.spec == g.best;
    csv << describe_hyperparams(p.spec) << ',' << format_double(p.score) << ',' << (sel ? 1 : 0) << '\n';
    points.push_back({{"hyperparams", describe_hyperparams(p.spec)}, {"mce", p.score}});
  }
  write_atomically(dir / "sweep.csv", csv.str());
  const json summary = {{"family", std::string(to_string(fam))},
                        {"augment", std::string(to_string(aug))},
                        {"eta", 0.2},
                        {"seed", seed},
                        {"epochs", epochs ? *epochs : cfg.train.epochs},
                        {"winner", describe_hyperparams(g.best)},
                        {"winner_mce", g.best_score},
                        {"points", points}};
  write_atomically(dir / "sweep.json", summary.dump(2) + "\n");
  std::cout << "winner " << describe_hyperparams(g.best) << " (mce " << g.best_score << ", " << g.points.size()
            << " grid points)\n";
  return kExitOk;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  std::string results, out;
  bool svg = false;
};

int cmd_report(const ReportArgs& a) {
  const auto reports = load_results_csv(a.results);
  if (reports.empty()) throw ParseError(a.results + " has no result rows", 0);
  const fs::path dir = output_dir(a.out);
  write_report(reports, dir, a.svg);
  std::cout << "summarized " << reports.size() << " row(s) into " << (dir / "summary.json").string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust losses with AugMix consistency under label noise and common corruptions"};
  app.require_subcommand(1);
  int code = kExitOk;

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the full experiment grid of a config file");
  run->add_option("--config", run_args.config, "TOML experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_args.out, "Output directory (default: $AUGLOSS_OUT)");
  run->add_flag("--force", run_args.force, "Overwrite an existing results.csv");
  run->add_option("--jobs", run_args.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  run->add_option("--seed-offset", run_args.seed_offset, "Added to every configured seed");
  run->add_flag("--no-svg", run_args.no_svg, "Skip methods.svg");
  run->callback([&] { code = cmd_run(run_args); });

  NoiseArgs noise_args;
  auto* gen = app.add_subcommand("gen-noise", "Print or write a transition matrix and optional noisy labels");
  gen->add_option("--scheme", noise_args.scheme, "symmetric | asymmetric_cifar10 | superclass");
  gen->add_option("--k", noise_args.k, "Number of classes")->check(CLI::Range(2, 100000));
  gen->add_option("--eta", noise_args.eta, "Noise rate")->required()->check(CLI::Range(0.0, 1.0));
  gen->add_option("--group-size", noise_args.group_size, "Superclass size for contiguous groups");
  gen->add_flag("--cifar100-superclasses", noise_args.cifar100, "Use the CIFAR-100 coarse-label partition");
  gen->add_option("--labels", noise_args.labels, "Clean label CSV (index,label) to corrupt")->check(CLI::ExistingFile);
  gen->add_option("--seed", noise_args.seed, "Seed for label corruption");
  gen->add_option("--out", noise_args.out, "Output directory");
  gen->callback([&] { code = cmd_gen_noise(noise_args); });

  PreviewArgs prev_args;
  auto* prev = app.add_subcommand("augment-preview", "Write the (orig, aug1, aug2) tuple for one image");
  prev->add_option("--input", prev_args.input, "PPM/PGM input image")->check(CLI::ExistingFile);
  prev->add_option("--synthetic-class", prev_args.synthetic_class, "Glyph class when no input is given")->check(CLI::Range(0, 9));
  prev->add_option("--side", prev_args.side, "Glyph side length")->check(CLI::Range(4, 1024));
  prev->add_option("--severity", prev_args.severity, "AugMix severity")->check(CLI::Range(0, 10));
  prev->add_option("--seed", prev_args.seed, "Augmentation seed");
  prev->add_option("--out", prev_args.out, "Output directory");
  prev->callback([&] { code = cmd_augment_preview(prev_args); });

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train one configuration and seed, writing a checkpoint");
  tr->add_option("--config", train_args.config, "TOML experiment config")->required()->check(CLI::ExistingFile);
  tr->add_option("--eta", train_args.eta, "Noise rate (default: first configured)");
  tr->add_option("--augment", train_args.augment, "noaug | augmix (default: first configured)");
  tr->add_option("--loss", train_args.loss, "Loss family (default: first [[loss]] entry)");
  tr->add_option("--seed", train_args.seed, "Seed (default: first configured)");
  tr->add_option("--out", train_args.out, "Output directory");
  tr->callback([&] { code = cmd_train(train_args); });

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the configured test data");
  ev->add_option("--config", eval_args.config, "TOML experiment config")->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", eval_args.out, "Output directory");
  ev->callback([&] { code = cmd_eval(eval_args); });

  SweepArgs sweep_args;
  auto* sw = app.add_subcommand("sweep", "Grid-search one loss family at 20% symmetric noise");
  sw->add_option("--config", sweep_args.config, "TOML experiment config")->required()->check(CLI::ExistingFile);
  sw->add_option("--family", sweep_args.family, "focal | nce_rce | alpha")->required();
  sw->add_option("--augment", sweep_args.augment, "noaug | augmix (default: first configured)");
  sw->add_option("--epochs", sweep_args.epochs, "Reduced epoch count per grid point")->check(CLI::PositiveNumber);
  sw->add_option("--seed", sweep_args.seed, "Seed (default: first configured)");
  sw->add_option("--out", sweep_args.out, "Output directory");
  sw->callback([&] { code = cmd_sweep(sweep_args); });

  ReportArgs report_args;
  auto* rep = app.add_subcommand("report", "Fold results.csv into summary.json and an optional SVG");
  rep->add_option("--results", report_args.results, "results.csv from a run")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", report_args.out, "Output directory");
  rep->add_flag("--svg", report_args.svg, "Also write methods.svg");
  rep->callback([&] { code = cmd_report(report_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ParseError& e) {
    std::cerr << "augloss: parse error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "augloss: " << e.what() << '\n';
    return kExitError;
  }
  return code;
}

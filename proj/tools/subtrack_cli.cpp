// subtrack: train subspace trackers, generate health-index curves, estimate
// RUL and run CMAPSS-style benchmarks from the command line.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "subtrack/subtrack.hpp"

namespace fs = std::filesystem;
using namespace subtrack;

namespace {

struct CliRun {
  RunConfig cfg;
  std::string mode = "sst";
  std::string features = "auto";
  std::string data_dir;
  std::string out_dir = "out";
  int K = 0;  // 0: 6 for FD002/FD004, else 1
  std::string config_file;
};

void add_run_options(CLI::App* app, CliRun& run, bool data_options) {
  auto& c = run.cfg;
  if (data_options) {
    app->add_option("--dataset", c.dataset, "Dataset id, e.g. FD001; resolves <data-dir>/{train,test,RUL}_<id>.txt");
    app->add_option("--data-dir", run.data_dir, "Directory holding the dataset files");
    app->add_option("--train", c.train_path, "Training (run-to-failure) file");
    app->add_option("--test", c.test_path, "Test (truncated) file");
    app->add_option("--rul", c.rul_path, "True RUL file for the test units");
  }
  app->add_option("--mode", run.mode, "Health-index mode")->check(CLI::IsMember({"sst", "sst-lr"}));
  app->add_option("--K", run.K, "Number of operating regimes (0 = by dataset)")->check(CLI::NonNegativeNumber);
  app->add_option("--d", c.d, "Intrinsic subspace dimension");
  app->add_option("--delta", c.delta, "In-subspace distance weight");
  app->add_option("--alpha", c.train.alpha, "Forgetting factor");
  app->add_option("--eta", c.train.eta, "Basis step size");
  app->add_option("--max-epochs", c.train.max_epochs, "Epoch limit for healthy-window training");
  app->add_option("--rel-tol", c.train.rel_tol, "Relative convergence tolerance");
  app->add_option("--healthy-cycles", c.healthy_cycles, "Leading cycles of each unit treated as healthy");
  app->add_option("--tau1", c.match.tau1, "Smallest matching lag");
  app->add_option("--tau2", c.match.tau2, "Largest matching lag");
  app->add_option("--beta", c.match.beta, "Similarity bandwidth");
  app->add_option("--smoothing", c.smoothing, "Exponential smoothing factor in (0, 1]");
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--features", run.features, "Tracked columns")->check(CLI::IsMember({"auto", "all", "sensors"}));
  app->add_flag("--lr-train-curves", c.lr_train_curves, "In sst-lr mode, regress the training curves too");
  app->add_option("--out", run.out_dir, "Output directory");
  app->add_option("--config", run.config_file, "TOML/INI file with option values (command-line flags win)");
}

void resolve(CliRun& run, bool need_train, bool need_test, bool need_rul) {
  auto& c = run.cfg;
  c.mode = parse_mode(run.mode);
  if (run.features == "all") c.features = FeatureSelection::kAll;
  if (run.features == "sensors") c.features = FeatureSelection::kSensorsOnly;
  if (!c.dataset.empty() && !run.data_dir.empty()) {
    const fs::path dir(run.data_dir);
    if (c.train_path.empty()) c.train_path = (dir / ("train_" + c.dataset + ".txt")).string();
    if (c.test_path.empty()) c.test_path = (dir / ("test_" + c.dataset + ".txt")).string();
    if (c.rul_path.empty()) c.rul_path = (dir / ("RUL_" + c.dataset + ".txt")).string();
  }
  c.K = run.K > 0 ? run.K : ((c.dataset == "FD002" || c.dataset == "FD004") ? 6 : 1);
  auto require = [](const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing ") + what + " path");
    if (!fs::exists(path)) throw ValidationError(std::string(what) + " file '" + path + "' does not exist");
  };
  if (need_train) require(c.train_path, "training");
  if (need_test) require(c.test_path, "test");
  if (need_rul) require(c.rul_path, "RUL");
  c.validate();
}

int cmd_train(CliRun& run) {
  resolve(run, true, false, false);
  const auto train = load_cmapss(run.cfg.train_path, SetKind::kTrain);
  const auto trained = train_pipeline(train, run.cfg);
  write_files(run.out_dir, trained_files(trained, run.cfg));
  std::cout << "trained " << trained.model.K() << " model(s) on " << train.size() << " units in "
            << trained.epochs << " epoch(s)" << (trained.converged ? "" : " (not converged)") << " -> "
            << run.out_dir << '\n';
  return 0;
}

int cmd_infer(CliRun& run, const std::string& model_dir) {
  resolve(run, false, true, false);
  const auto trained = load_trained(model_dir);
  const auto test = load_cmapss(run.cfg.test_path, SetKind::kTest);
  std::optional<std::vector<double>> truth;
  if (!run.cfg.rul_path.empty() && fs::exists(run.cfg.rul_path)) {
    truth = load_rul_targets(run.cfg.rul_path, test.size());
  }
  const auto inf = infer_pipeline(trained, test, run.cfg.match);
  write_files(run.out_dir, inference_files(inf, truth));
  std::cout << "estimated RUL for " << inf.estimates.size() << " units -> " << run.out_dir << '\n';
  return 0;
}

int cmd_benchmark(CliRun& run) {
  resolve(run, true, true, true);
  const auto start = std::chrono::steady_clock::now();
  auto b = run_benchmark(run.cfg);
  b.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  FileMap files = inference_files(b.inferred, [&] {
    std::vector<double> truth;
    for (const auto& r : b.report.rows) truth.push_back(r.truth);
    return truth;
  }());
  std::ostringstream lib;
  write_hi_csv(lib, b.trained.library);
  files["train_hi.csv"] = lib.str();
  files["report.json"] = dump(to_json(b.report));
  std::ostringstream text;
  write_report_text(text, b.report);
  files["report.txt"] = text.str();
  write_files(run.out_dir, files);
  std::cout << text.str();
  return 0;
}

int cmd_synth(const SyntheticConfig& sc, const std::string& name, const std::string& out_dir) {
  const int sensors = sc.K == 1 ? sc.D - kNumSettings : sc.D;
  if (sensors != kNumSensors) {
    throw ConfigError("synth: the 26-column file layout needs D = 24 with K = 1 or D = 21 with K > 1");
  }
  const auto fleet = generate_synthetic(sc);
  FileMap files;
  std::ostringstream train, test, rul, truth;
  write_cmapss(train, fleet.train);
  write_cmapss(test, fleet.test);
  for (double r : fleet.true_rul) rul << static_cast<long long>(r) << '\n';
  write_truth_csv(truth, fleet.test_truth);
  files["train_" + name + ".txt"] = train.str();
  files["test_" + name + ".txt"] = test.str();
  files["RUL_" + name + ".txt"] = rul.str();
  files["truth_" + name + ".csv"] = truth.str();
  write_files(out_dir, files);
  std::cout << "wrote " << sc.n_units << " training and " << sc.n_units << " test units -> " << out_dir << '\n';
  return 0;
}

// CLI11 only reads config files for the top-level app, so a subcommand's
// --config is expanded here into leading --key=value arguments. Keys may sit
// at top level or in a section named after the subcommand.
std::vector<std::string> expand_config(const std::string& path, const std::string& sub,
                                       const std::vector<std::string>& rest) {
  std::vector<std::string> args{sub};
  for (const auto& item : CLI::ConfigTOML{}.from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == sub)) continue;
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    args.push_back("--" + item.name + "=" + value);
  }
  args.insert(args.end(), rest.begin(), rest.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subspace-tracking health indices and remaining-useful-life estimation"};
  app.require_subcommand(1);

  CliRun train_run, infer_run, bench_run;
  auto* train = app.add_subcommand("train", "Fit normalizer, subspace model(s), scaler and regressor");
  add_run_options(train, train_run, true);

  auto* infer = app.add_subcommand("infer", "Score test units with a trained model and estimate RUL");
  add_run_options(infer, infer_run, true);
  std::string model_dir = "out";
  infer->add_option("--model-dir", model_dir, "Directory written by 'train'")->required();

  auto* bench = app.add_subcommand("benchmark", "Train, infer and report RMSE/score in one run");
  add_run_options(bench, bench_run, true);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic run-to-failure fleet");
  SyntheticConfig sc;
  std::string synth_name = "SYN";
  std::string synth_out = "synthetic";
  synth->add_option("--n-units", sc.n_units, "Units per set");
  synth->add_option("--D", sc.D, "Tracked dimension (24 for K = 1, 21 for K > 1)");
  synth->add_option("--d", sc.d, "Intrinsic dimension");
  synth->add_option("--K", sc.K, "Number of regimes");
  synth->add_option("--noise-std", sc.noise_std, "Isotropic noise standard deviation");
  synth->add_option("--drift-onset-fraction", sc.drift_onset_fraction, "Onset as a fraction of life");
  synth->add_option("--drift-rate", sc.drift_rate, "Off-subspace drift per cycle");
  synth->add_option("--min-life", sc.min_life, "Shortest life in cycles");
  synth->add_option("--max-life", sc.max_life, "Longest life in cycles");
  synth->add_option("--seed", sc.seed, "Random seed");
  synth->add_option("--name", synth_name, "Dataset id used in file names");
  synth->add_option("--out", synth_out, "Output directory");
  std::string synth_config;
  synth->add_option("--config", synth_config, "TOML/INI file with option values (command-line flags win)");

  for (auto* sub : {train, infer, bench, synth}) {
    for (auto* opt : sub->get_options()) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  try {
    app.parse(argc, argv);
    std::string config;
    CLI::App* chosen = nullptr;
    if (*train) std::tie(config, chosen) = std::pair{train_run.config_file, train};
    if (*infer) std::tie(config, chosen) = std::pair{infer_run.config_file, infer};
    if (*bench) std::tie(config, chosen) = std::pair{bench_run.config_file, bench};
    if (*synth) std::tie(config, chosen) = std::pair{synth_config, synth};
    if (chosen && !config.empty()) {
      std::vector<std::string> rest(argv + 2, argv + argc);
      auto args = expand_config(config, chosen->get_name(), rest);
      std::reverse(args.begin(), args.end());  // CLI11 consumes vectors from the back
      app.clear();
      app.parse(args);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*train) return cmd_train(train_run);
    if (*infer) return cmd_infer(infer_run, model_dir);
    if (*bench) return cmd_benchmark(bench_run);
    if (*synth) return cmd_synth(sc, synth_name, synth_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kUsage);
}

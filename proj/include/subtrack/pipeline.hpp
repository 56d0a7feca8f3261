#pragma once

// End-to-end prognostics pipeline:
//   regimes -> normalization -> subspace tracking on the healthy window ->
//   frozen-model distances -> health-index curves (optionally regressed from
//   subspace coordinates) -> similarity-weighted RUL -> metrics.

#include <Eigen/Dense>

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "subtrack/dataset.hpp"
#include "subtrack/error.hpp"
#include "subtrack/eval.hpp"
#include "subtrack/health.hpp"
#include "subtrack/multiscale.hpp"
#include "subtrack/rul.hpp"
#include "subtrack/serialize.hpp"
#include "subtrack/subspace.hpp"

namespace subtrack {

enum class HiMode { kSst, kSstLr };

inline std::string to_string(HiMode m) { return m == HiMode::kSst ? "sst" : "sst-lr"; }

inline HiMode parse_mode(const std::string& s) {
  if (s == "sst") return HiMode::kSst;
  if (s == "sst-lr") return HiMode::kSstLr;
  throw ConfigError("unknown mode '" + s + "' (expected sst or sst-lr)");
}

struct RunConfig {
  std::string dataset;  // e.g. FD001; used for file names and reference tables
  std::string train_path;
  std::string test_path;
  std::string rul_path;
  HiMode mode = HiMode::kSst;
  int K = 1;
  int d = 3;
  double delta = kDefaultDelta;
  TrainConfig train;
  int healthy_cycles = 20;
  MatchConfig match;
  double smoothing = 0.3;
  std::uint64_t seed = 0;
  // Regress training curves too instead of keeping their tracked curves.
  bool lr_train_curves = false;
  // Empty: all columns when K = 1, sensors only when K > 1.
  std::optional<FeatureSelection> features;

  FeatureSelection selection() const {
    if (features) return *features;
    return K == 1 ? FeatureSelection::kAll : FeatureSelection::kSensorsOnly;
  }

  void validate() const {
    if (K < 1) throw ConfigError("K must be >= 1");
    if (d < 1) throw ConfigError("d must be >= 1");
    if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
    if (healthy_cycles < d + 1) throw ConfigError("healthy_cycles must be >= d + 1");
    if (!(smoothing > 0.0 && smoothing <= 1.0)) throw ConfigError("smoothing must lie in (0, 1]");
    train.validate();
    match.validate();
  }
};

inline Json to_json(const RunConfig& c) {
  return Json{{"dataset", c.dataset},
              {"mode", to_string(c.mode)},
              {"K", c.K},
              {"d", c.d},
              {"delta", c.delta},
              {"alpha", c.train.alpha},
              {"eta", c.train.eta},
              {"max_epochs", c.train.max_epochs},
              {"rel_tol", c.train.rel_tol},
              {"healthy_cycles", c.healthy_cycles},
              {"tau1", c.match.tau1},
              {"tau2", c.match.tau2},
              {"beta", c.match.beta},
              {"smoothing", c.smoothing},
              {"seed", c.seed},
              {"lr_train_curves", c.lr_train_curves},
              {"features", c.selection() == FeatureSelection::kAll ? "all" : "sensors"}};
}

struct TrainedPipeline {
  FeatureSelection selection = FeatureSelection::kAll;
  HiMode mode = HiMode::kSst;
  int healthy_cycles = 20;
  double smoothing = 0.3;
  bool lr_train_curves = false;
  Normalizer normalizer;
  MultiModel model;  // K = 1 holds the single tracked subspace
  DistanceScaler scaler;
  std::optional<HiRegressor> regressor;
  std::vector<HiCurve> library;  // training curves
  std::vector<double> trace;
  int epochs = 0;
  bool converged = false;
};

namespace detail {

inline Eigen::MatrixXd stack_settings(const TrajectorySet& set) {
  Eigen::Index n = 0;
  for (const auto& t : set.trajectories) n += t.length();
  Eigen::MatrixXd out(n, kNumSettings);
  Eigen::Index r = 0;
  for (const auto& t : set.trajectories) {
    out.middleRows(r, t.length()) = t.settings();
    r += t.length();
  }
  return out;
}

inline RegimeLabels label_by_centroid(const TrajectorySet& set, const Eigen::MatrixXd& centroids) {
  RegimeLabels labels;
  for (const auto& t : set.trajectories) {
    std::vector<int> l(static_cast<std::size_t>(t.length()));
    for (Eigen::Index i = 0; i < t.length(); ++i) {
      l[static_cast<std::size_t>(i)] = nearest_centroid(centroids, t.settings().row(i).transpose());
    }
    labels.push_back(std::move(l));
  }
  return labels;
}

inline std::vector<Eigen::MatrixXd> tracked_rows(const TrajectorySet& normalized, FeatureSelection sel) {
  std::vector<Eigen::MatrixXd> rows;
  for (const auto& t : normalized.trajectories) rows.push_back(tracked_features(t, sel));
  return rows;
}

// Matching operates on smoothed health indices.
inline HiCurve matching_view(const HiCurve& c, double smoothing) {
  HiCurve v;
  v.unit_id = c.unit_id;
  v.sigma = smooth(c.sigma, smoothing);
  return v;
}

}  // namespace detail

// Normalizes a set the way the trained pipeline expects.
inline TrajectorySet normalize_for(const TrainedPipeline& p, const TrajectorySet& set) {
  if (p.model.K() > 1) {
    return apply_normalizer(p.normalizer, set, detail::label_by_centroid(set, p.model.centroids));
  }
  return apply_normalizer(p.normalizer, set);
}

inline TrainedPipeline train_pipeline(const TrajectorySet& train, const RunConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw ValidationError("training set is empty");
  TrainedPipeline p;
  p.selection = cfg.selection();
  p.mode = cfg.mode;
  p.healthy_cycles = cfg.healthy_cycles;
  p.smoothing = cfg.smoothing;
  p.lr_train_curves = cfg.lr_train_curves;

  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(1, kNumSettings);
  std::optional<RegimeLabels> labels;
  if (cfg.K > 1) {
    centroids = cluster_regimes(detail::stack_settings(train), cfg.K, cfg.seed).centroids;
    labels = detail::label_by_centroid(train, centroids);
  }
  p.normalizer = fit_normalizer(train, labels);
  const TrajectorySet normalized = apply_normalizer(p.normalizer, train, labels);
  const auto rows = detail::tracked_rows(normalized, p.selection);

  // Healthy windows: first healthy_cycles of every unit, pooled per regime.
  const Eigen::Index D = rows.front().cols();
  std::vector<std::vector<Eigen::VectorXd>> per_regime(static_cast<std::size_t>(cfg.K));
  std::vector<Eigen::VectorXd> pooled;
  for (std::size_t u = 0; u < rows.size(); ++u) {
    const Eigen::Index h = std::min<Eigen::Index>(rows[u].rows(), cfg.healthy_cycles);
    for (Eigen::Index i = 0; i < h; ++i) {
      const int k = labels ? (*labels)[u][static_cast<std::size_t>(i)] : 0;
      per_regime[static_cast<std::size_t>(k)].push_back(rows[u].row(i).transpose());
      pooled.push_back(rows[u].row(i).transpose());
    }
  }
  MultiModel mm;
  mm.centroids = centroids;
  for (int k = 0; k < cfg.K; ++k) {
    const auto& w = per_regime[static_cast<std::size_t>(k)];
    Eigen::MatrixXd window(static_cast<Eigen::Index>(w.size()), D);
    for (std::size_t i = 0; i < w.size(); ++i) window.row(static_cast<Eigen::Index>(i)) = w[i].transpose();
    mm.models.push_back(init_subspace(window, cfg.d, cfg.delta, cfg.train.lambda_min));
  }
  Eigen::MatrixXd healthy(static_cast<Eigen::Index>(pooled.size()), D);
  for (std::size_t i = 0; i < pooled.size(); ++i) healthy.row(static_cast<Eigen::Index>(i)) = pooled[i].transpose();
  auto trained = train_multi_until_converged(std::move(mm), healthy, cfg.train);
  p.model = std::move(trained.model);
  p.trace = std::move(trained.trace);
  p.epochs = trained.epochs;
  p.converged = trained.converged;

  std::vector<FrozenTrack> tracks;
  std::vector<Series> raw;
  for (const auto& r : rows) {
    tracks.push_back(track_frozen(p.model, r));
    raw.push_back(tracks.back().distance);
  }
  p.scaler = fit_scaler(raw, cfg.healthy_cycles, cfg.smoothing);
  for (std::size_t u = 0; u < rows.size(); ++u) {
    p.library.push_back(make_hi_curve(train.trajectories[u].unit_id, raw[u], p.scaler, cfg.smoothing));
  }

  if (cfg.mode == HiMode::kSstLr) {
    Eigen::Index n = 0;
    for (const auto& t : tracks) n += t.projections.rows();
    Eigen::MatrixXd proj(n, cfg.d);
    Eigen::VectorXd target(n);
    std::vector<int> regime;
    Eigen::Index r = 0;
    for (std::size_t u = 0; u < tracks.size(); ++u) {
      proj.middleRows(r, tracks[u].projections.rows()) = tracks[u].projections;
      for (std::size_t i = 0; i < p.library[u].length(); ++i) target(r + static_cast<Eigen::Index>(i)) = p.library[u].sigma[i];
      regime.insert(regime.end(), tracks[u].regime.begin(), tracks[u].regime.end());
      r += tracks[u].projections.rows();
    }
    p.regressor = cfg.K > 1 ? fit_hi_regression(proj, target, regime, cfg.K)
                            : fit_hi_regression(proj, target);
    if (cfg.lr_train_curves) {
      for (std::size_t u = 0; u < tracks.size(); ++u) {
        p.library[u].sigma = cfg.K > 1 ? predict_hi(*p.regressor, tracks[u].projections, tracks[u].regime)
                                       : predict_hi(*p.regressor, tracks[u].projections);
      }
    }
  }
  return p;
}

struct InferResult {
  std::vector<HiCurve> curves;
  std::vector<RulEstimate> estimates;
  // Test units longer than every admissible training alignment are matched on
  // their most recent cycles only.
  int n_tail_matched = 0;
};

inline std::vector<HiCurve> health_curves(const TrainedPipeline& p, const TrajectorySet& set) {
  const TrajectorySet normalized = normalize_for(p, set);
  std::vector<HiCurve> curves;
  for (const auto& t : normalized.trajectories) {
    const auto rows = tracked_features(t, p.selection);
    if (rows.cols() != p.model.dim()) {
      throw ValidationError("unit " + std::to_string(t.unit_id) + ": " + std::to_string(rows.cols()) +
                            " tracked features, model expects " + std::to_string(p.model.dim()));
    }
    FrozenTrack track = track_frozen(p.model, rows);
    HiCurve c = make_hi_curve(t.unit_id, track.distance, p.scaler, p.smoothing);
    if (p.mode == HiMode::kSstLr) {
      if (!p.regressor) throw ValidationError("sst-lr pipeline has no regressor");
      c.sigma = p.model.K() > 1 ? predict_hi(*p.regressor, track.projections, track.regime)
                                : predict_hi(*p.regressor, track.projections);
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

inline InferResult infer_pipeline(const TrainedPipeline& p, const TrajectorySet& test,
                                  const MatchConfig& match) {
  match.validate();
  InferResult res;
  res.curves = health_curves(p, test);
  std::vector<HiCurve> library;
  std::size_t longest = 0;
  for (const auto& c : p.library) {
    library.push_back(detail::matching_view(c, p.smoothing));
    longest = std::max(longest, c.length());
  }
  for (const auto& c : res.curves) {
    HiCurve view = detail::matching_view(c, p.smoothing);
    try {
      res.estimates.push_back(estimate_rul(view, library, match));
    } catch (const NoMatchError&) {
      const std::size_t keep = longest > static_cast<std::size_t>(match.tau1)
                                   ? longest - static_cast<std::size_t>(match.tau1)
                                   : 0;
      if (keep == 0 || keep >= view.length()) throw;
      view.sigma.erase(view.sigma.begin(), view.sigma.end() - static_cast<std::ptrdiff_t>(keep));
      res.estimates.push_back(estimate_rul(view, library, match));
      ++res.n_tail_matched;
    }
  }
  return res;
}

struct RulReport {
  std::string dataset;
  std::vector<RulRow> rows;
  double rmse = 0.0;
  double score = 0.0;
  Json config;
  Json diagnostics;
  double wall_seconds = 0.0;  // not part of the JSON body
};

inline RulReport make_report(const RunConfig& cfg, const TrainedPipeline& p, const InferResult& inf,
                             const std::vector<double>& truth) {
  if (truth.size() != inf.estimates.size()) {
    throw ValidationError("truth has " + std::to_string(truth.size()) + " entries for " +
                          std::to_string(inf.estimates.size()) + " test units");
  }
  RulReport r;
  r.dataset = cfg.dataset;
  std::vector<double> errors;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = inf.estimates[i].estimate - truth[i];
    r.rows.push_back({inf.estimates[i].unit_id, inf.estimates[i].estimate, truth[i], e});
    errors.push_back(e);
  }
  r.rmse = rmse(errors);
  r.score = score(errors);
  r.config = to_json(cfg);
  int fallbacks = 0;
  for (const auto& e : inf.estimates) fallbacks += e.underflow_fallback ? 1 : 0;
  r.diagnostics = Json{{"epochs", p.epochs},
                       {"converged", p.converged},
                       {"final_train_error", p.trace.back()},
                       {"scaler_floor", p.scaler.floor},
                       {"scaler_ceiling", p.scaler.ceiling},
                       {"regimes", p.model.K()},
                       {"tail_matched_units", inf.n_tail_matched},
                       {"underflow_fallbacks", fallbacks}};
  return r;
}

inline Json to_json(const RulReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back(Json{{"unit_id", row.unit_id},
                        {"estimate", row.estimate},
                        {"truth", row.truth},
                        {"error", row.error}});
  }
  return Json{{"version", kFormatVersion},
              {"kind", "rul_report"},
              {"dataset", r.dataset},
              {"n_units", r.rows.size()},
              {"rmse", r.rmse},
              {"score", r.score},
              {"config", r.config},
              {"diagnostics", r.diagnostics},
              {"units", rows}};
}

inline void write_report_text(std::ostream& out, const RulReport& r) {
  out << "dataset: " << (r.dataset.empty() ? "(custom)" : r.dataset) << '\n'
      << "mode: " << r.config.value("mode", "") << "  K: " << r.config.value("K", 0)
      << "  d: " << r.config.value("d", 0) << "  units: " << r.rows.size() << '\n'
      << "wall time: " << detail::fixed(r.wall_seconds, 2) << " s\n\n";
  write_metrics_table(out, r.dataset, r.config.value("mode", "this run"), r.rmse, r.score);
  out << '\n'
      << detail::pad_left("unit", 6) << detail::pad_left("estimate", 12) << detail::pad_left("truth", 10)
      << detail::pad_left("error", 10) << '\n';
  for (const auto& row : r.rows) {
    out << detail::pad_left(std::to_string(row.unit_id), 6)
        << detail::pad_left(detail::fixed(row.estimate, 2), 12)
        << detail::pad_left(detail::fixed(row.truth, 0), 10)
        << detail::pad_left(detail::fixed(row.error, 2), 10) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Persistence of a trained pipeline.

using FileMap = std::map<std::string, std::string>;

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline FileMap trained_files(const TrainedPipeline& p, const RunConfig& cfg) {
  FileMap files;
  files["model.json"] = p.model.K() == 1 ? dump(to_json(p.model.models.front())) : dump(to_json(p.model));
  files["normalizer.json"] = dump(to_json(p.normalizer));
  files["scaler.json"] = dump(to_json(p.scaler));
  if (p.regressor) files["regressor.json"] = dump(to_json(*p.regressor));
  std::ostringstream lib;
  write_hi_csv(lib, p.library);
  files["train_hi.csv"] = lib.str();
  std::ostringstream trace;
  trace << "epoch,mean_distance\n";
  for (std::size_t e = 0; e < p.trace.size(); ++e) trace << e << ',' << detail::format_double(p.trace[e]) << '\n';
  files["train_trace.csv"] = trace.str();
  files["manifest.json"] = dump(Json{{"version", kFormatVersion},
                                     {"kind", "pipeline"},
                                     {"mode", to_string(p.mode)},
                                     {"features", p.selection == FeatureSelection::kAll ? "all" : "sensors"},
                                     {"healthy_cycles", p.healthy_cycles},
                                     {"smoothing", p.smoothing},
                                     {"lr_train_curves", p.lr_train_curves},
                                     {"epochs", p.epochs},
                                     {"converged", p.converged},
                                     {"config", to_json(cfg)}});
  return files;
}

// Writes all files after creating the directory; nothing is written when the
// map is never produced.
inline void write_files(const std::filesystem::path& dir, const FileMap& files) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, body] : files) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + (dir / name).string() + "'");
    out << body;
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError("'" + path.string() + "': malformed JSON: " + e.what());
  }
}

inline TrainedPipeline load_trained(const std::filesystem::path& dir) {
  TrainedPipeline p;
  try {
    const Json manifest = read_json_file(dir / "manifest.json");
    detail::check_header(manifest, "pipeline");
    p.mode = parse_mode(detail::require(manifest, "mode").get<std::string>());
    const auto features = detail::require(manifest, "features").get<std::string>();
    if (features != "all" && features != "sensors") throw ValidationError("manifest: bad features value");
    p.selection = features == "all" ? FeatureSelection::kAll : FeatureSelection::kSensorsOnly;
    p.healthy_cycles = detail::require(manifest, "healthy_cycles").get<int>();
    p.smoothing = detail::number(manifest, "smoothing");
    p.lr_train_curves = detail::require(manifest, "lr_train_curves").get<bool>();
    p.epochs = detail::require(manifest, "epochs").get<int>();
    p.converged = detail::require(manifest, "converged").get<bool>();

    const Json model = read_json_file(dir / "model.json");
    if (model.value("kind", "") == "multimodel") {
      p.model = multimodel_from_json(model);
    } else {
      p.model = single_model(subspace_from_json(model));
    }
    p.normalizer = normalizer_from_json(read_json_file(dir / "normalizer.json"));
    p.scaler = scaler_from_json(read_json_file(dir / "scaler.json"));
    if (p.mode == HiMode::kSstLr) p.regressor = regressor_from_json(read_json_file(dir / "regressor.json"));
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
  std::ifstream lib(dir / "train_hi.csv");
  if (!lib) throw ValidationError("cannot open '" + (dir / "train_hi.csv").string() + "'");
  p.library = read_hi_csv(lib);
  if (p.library.empty()) throw ValidationError("train_hi.csv holds no curves");
  std::ifstream trace(dir / "train_trace.csv");
  std::string line;
  std::getline(trace, line);
  while (std::getline(trace, line)) {
    const auto comma = line.find(',');
    if (comma != std::string::npos) p.trace.push_back(detail::parse_double(std::string_view(line).substr(comma + 1), 0));
  }
  if (p.trace.empty()) p.trace.push_back(0.0);
  return p;
}

inline FileMap inference_files(const InferResult& inf, const std::optional<std::vector<double>>& truth) {
  FileMap files;
  std::ostringstream hi;
  write_hi_csv(hi, inf.curves);
  files["test_hi.csv"] = hi.str();
  std::ostringstream rul;
  write_rul_csv(rul, inf.estimates, truth);
  files["rul.csv"] = rul.str();
  return files;
}

struct BenchmarkResult {
  TrainedPipeline trained;
  InferResult inferred;
  RulReport report;
};

// Runs every stage; errors are re-thrown with the failing stage named.
inline BenchmarkResult run_benchmark(const TrajectorySet& train, const TrajectorySet& test,
                                     const std::vector<double>& truth, const RunConfig& cfg) {
  BenchmarkResult b;
  auto stage = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const ParseError&) {
      throw;
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("[") + name + "] " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("[") + name + "] " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("[") + name + "] " + e.what());
    }
  };
  stage("train", [&] { b.trained = train_pipeline(train, cfg); });
  stage("infer", [&] { b.inferred = infer_pipeline(b.trained, test, cfg.match); });
  stage("evaluate", [&] { b.report = make_report(cfg, b.trained, b.inferred, truth); });
  return b;
}

inline BenchmarkResult run_benchmark(const RunConfig& cfg) {
  TrajectorySet train, test;
  std::vector<double> truth;
  try {
    train = load_cmapss(cfg.train_path, SetKind::kTrain);
    test = load_cmapss(cfg.test_path, SetKind::kTest);
    truth = load_rul_targets(cfg.rul_path, test.size());
  } catch (const ParseError& e) {
    throw ValidationError(std::string("[load] ") + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("[load] ") + e.what());
  }
  return run_benchmark(train, test, truth, cfg);
}

}  // namespace subtrack

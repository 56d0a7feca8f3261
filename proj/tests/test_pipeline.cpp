#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "subtrack/subtrack.hpp"
#include "support/oracles.hpp"

using namespace subtrack;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("subtrack_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Serialization, SubspaceRoundTripIsExact) {
  std::mt19937_64 rng(1);
  const auto m = oracle::random_model(24, 3, rng);
  const auto back = subspace_from_json(Json::parse(to_json(m).dump()));
  EXPECT_EQ(back.basis, m.basis);
  EXPECT_EQ(back.center, m.center);
  EXPECT_EQ(back.lambdas, m.lambdas);
  EXPECT_EQ(back.delta, m.delta);
}

TEST(Serialization, MultiModelEnvelope) {
  std::mt19937_64 rng(2);
  MultiModel mm;
  mm.centroids = Eigen::MatrixXd(2, 3);
  mm.centroids << 0, 0, 100, 42, 0.84, 100;
  mm.models = {oracle::random_model(21, 3, rng), oracle::random_model(21, 3, rng)};
  const Json j = to_json(mm);
  EXPECT_EQ(j.at("K"), 2);
  const auto back = multimodel_from_json(Json::parse(j.dump()));
  EXPECT_EQ(back.centroids, mm.centroids);
  EXPECT_EQ(back.models[1].basis, mm.models[1].basis);
}

TEST(Serialization, LoaderNamesBrokenInvariant) {
  std::mt19937_64 rng(3);
  Json j = to_json(oracle::random_model(6, 2, rng));
  j["U1"][0][0] = 5.0;
  try {
    subspace_from_json(j);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("U1^T U1 = I"), std::string::npos);
  }
  j = to_json(oracle::random_model(6, 2, rng));
  j["version"] = 2;
  EXPECT_THROW(subspace_from_json(j), ValidationError);
  j = to_json(oracle::random_model(6, 2, rng));
  j["delta"] = -1.0;
  EXPECT_THROW(subspace_from_json(j), ValidationError);
  j = to_json(oracle::random_model(6, 2, rng));
  j.erase("lambdas");
  EXPECT_THROW(subspace_from_json(j), ValidationError);
}

TEST(Serialization, NormalizerScalerRegressor) {
  SyntheticConfig sc;
  sc.n_units = 3;
  const auto fleet = generate_synthetic(sc);
  const auto n = fit_normalizer(fleet.train);
  const auto nb = normalizer_from_json(Json::parse(to_json(n).dump()));
  EXPECT_EQ(nb.regimes[0].mean, n.regimes[0].mean);
  EXPECT_EQ(nb.regimes[0].masked, n.regimes[0].masked);
  const DistanceScaler s{0.25, 7.5};
  EXPECT_EQ(scaler_from_json(to_json(s)).ceiling, 7.5);
  EXPECT_THROW(scaler_from_json(to_json(DistanceScaler{3.0, 1.0})), ValidationError);
  HiRegressor r;
  r.weights.push_back(Eigen::Vector4d(0.1, 0.2, 0.3, 0.4));
  EXPECT_EQ(regressor_from_json(to_json(r)).weights[0], r.weights[0]);
}

// Test units are prefixes of training units (cut after their drift onset),
// only lag 0 is admissible and the bandwidth is tiny, so each test curve
// matches exactly its own training curve.
TEST(Pipeline, SelfMatchLibraryRecoversRul) {
  SyntheticConfig sc;
  sc.n_units = 40;
  sc.noise_std = 0.0;
  sc.drift_rate = 0.02;
  sc.seed = 5;
  const auto fleet = generate_synthetic(sc);

  TrajectorySet train, test;
  train.kind = SetKind::kTrain;
  test.kind = SetKind::kTest;
  std::vector<double> truth;
  std::mt19937_64 rng(6);
  for (std::size_t u = 0; u < fleet.train.size(); ++u) {
    const auto& t = fleet.train.trajectories[u];
    train.trajectories.push_back(t);
    const int onset = fleet.train_truth[u].onset;
    const int cut = std::uniform_int_distribution<int>(onset + 5, static_cast<int>(t.length()) - 1)(rng);
    Trajectory p{t.unit_id, t.features.topRows(cut)};
    test.trajectories.push_back(p);
    truth.push_back(static_cast<double>(t.length() - cut));
  }
  RunConfig cfg;
  cfg.match = MatchConfig{0, 0, 1e-6};
  const auto b = run_benchmark(train, test, truth, cfg);
  EXPECT_LE(b.report.rmse, 1.0);
}

TEST(Pipeline, HealthyWindowScoresNearFullHealth) {
  SyntheticConfig sc;
  sc.n_units = 30;
  const auto fleet = generate_synthetic(sc);
  const auto p = train_pipeline(fleet.train, RunConfig{});
  double mean = 0.0;
  int n = 0;
  for (const auto& c : p.library) {
    for (int i = 0; i < 20; ++i, ++n) mean += c.sigma[static_cast<std::size_t>(i)];
  }
  EXPECT_GE(mean / n, 0.9);
  EXPECT_TRUE(p.converged);
  EXPECT_GT(p.scaler.ceiling / p.scaler.floor, 1.0);
}

TEST(Pipeline, LrModeProducesRegressor) {
  SyntheticConfig sc;
  sc.n_units = 20;
  const auto fleet = generate_synthetic(sc);
  RunConfig cfg;
  cfg.mode = HiMode::kSstLr;
  const auto b = run_benchmark(fleet.train, fleet.test, fleet.true_rul, cfg);
  ASSERT_TRUE(b.trained.regressor.has_value());
  EXPECT_EQ(b.trained.regressor->input_dim(), 3);
  EXPECT_EQ(b.report.rows.size(), 20u);
  for (const auto& c : b.inferred.curves)
    for (double s : c.sigma) ASSERT_TRUE(s >= 0.0 && s <= 1.0);
}

TEST(Pipeline, MultiRegimeFleet) {
  SyntheticConfig sc;
  sc.n_units = 20;
  sc.K = 6;
  sc.D = 21;
  sc.noise_std = 0.05;
  const auto fleet = generate_synthetic(sc);
  RunConfig cfg;
  cfg.K = 6;
  const auto b = run_benchmark(fleet.train, fleet.test, fleet.true_rul, cfg);
  EXPECT_EQ(b.trained.model.K(), 6);
  EXPECT_EQ(b.trained.normalizer.num_regimes(), 6u);
  EXPECT_EQ(b.trained.selection, FeatureSelection::kSensorsOnly);
  EXPECT_EQ(b.trained.model.dim(), 21);
  EXPECT_EQ(b.report.rows.size(), 20u);
  cfg.mode = HiMode::kSstLr;
  const auto lr = run_benchmark(fleet.train, fleet.test, fleet.true_rul, cfg);
  EXPECT_EQ(lr.trained.regressor->weights.size(), 6u);
}

TEST(Pipeline, StageTaggedErrors) {
  SyntheticConfig sc;
  sc.n_units = 5;
  const auto fleet = generate_synthetic(sc);
  RunConfig cfg;
  try {
    run_benchmark(fleet.train, fleet.test, std::vector<double>{1.0}, cfg);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("[evaluate]"), std::string::npos);
  }
  cfg.healthy_cycles = 2;
  EXPECT_THROW(run_benchmark(fleet.train, fleet.test, fleet.true_rul, cfg), ConfigError);
}

TEST(Pipeline, LongTestUnitsMatchOnRecentCycles) {
  SyntheticConfig sc;
  sc.n_units = 10;
  sc.min_life = 150;
  sc.max_life = 160;
  const auto fleet = generate_synthetic(sc);
  SyntheticConfig longer = sc;
  longer.min_life = longer.max_life = 400;
  longer.seed = 9;
  auto other = generate_synthetic(longer);
  TrajectorySet test;
  test.trajectories.push_back(other.train.trajectories[0]);
  test.trajectories.front().features = test.trajectories.front().features.topRows(300);
  const auto p = train_pipeline(fleet.train, RunConfig{});
  const auto inf = infer_pipeline(p, test, MatchConfig{});
  EXPECT_EQ(inf.n_tail_matched, 1);
  ASSERT_EQ(inf.estimates.size(), 1u);
}

TEST(Pipeline, TrainThenLoadMatchesInMemoryInference) {
  SyntheticConfig sc;
  sc.n_units = 15;
  const auto fleet = generate_synthetic(sc);
  for (HiMode mode : {HiMode::kSst, HiMode::kSstLr}) {
    RunConfig cfg;
    cfg.mode = mode;
    const auto b = run_benchmark(fleet.train, fleet.test, fleet.true_rul, cfg);
    const auto dir = scratch_dir("roundtrip");
    write_files(dir, trained_files(b.trained, cfg));
    const auto loaded = load_trained(dir);
    const auto inf = infer_pipeline(loaded, fleet.test, cfg.match);
    ASSERT_EQ(inf.estimates.size(), b.inferred.estimates.size());
    for (std::size_t i = 0; i < inf.estimates.size(); ++i) {
      EXPECT_EQ(inf.estimates[i].estimate, b.inferred.estimates[i].estimate);
      EXPECT_EQ(inf.curves[i].sigma, b.inferred.curves[i].sigma);
    }
    fs::remove_all(dir);
  }
}

TEST(Pipeline, ReportJsonIsDeterministic) {
  SyntheticConfig sc;
  sc.n_units = 12;
  const auto fleet = generate_synthetic(sc);
  RunConfig cfg;
  cfg.dataset = "SYN";
  const auto a = run_benchmark(fleet.train, fleet.test, fleet.true_rul, cfg);
  const auto b = run_benchmark(fleet.train, fleet.test, fleet.true_rul, cfg);
  EXPECT_EQ(to_json(a.report).dump(), to_json(b.report).dump());
  const Json j = to_json(a.report);
  EXPECT_TRUE(j.contains("rmse"));
  EXPECT_TRUE(j.contains("score"));
  EXPECT_EQ(j.at("units").size(), 12u);
  std::ostringstream text;
  write_report_text(text, a.report);
  EXPECT_NE(text.str().find("RMSE"), std::string::npos);
}

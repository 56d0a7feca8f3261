#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "subtrack/dataset.hpp"
#include "subtrack/health.hpp"
#include "subtrack/subspace.hpp"
#include "support/oracles.hpp"

using namespace subtrack;

TEST(DistanceSeries, CopiesOfCenterAreZero) {
  std::mt19937_64 rng(1);
  const auto m = oracle::random_model(7, 2, rng);
  const Eigen::MatrixXd rows = m.center.transpose().replicate(12, 1);
  const auto s = distance_series(m, rows);
  ASSERT_EQ(s.size(), 12u);
  for (double v : s) EXPECT_EQ(v, 0.0);
}

TEST(DistanceSeries, RisesAfterDriftOnset) {
  SyntheticConfig cfg;
  cfg.n_units = 10;
  cfg.noise_std = 0.05;
  cfg.drift_rate = 0.02;
  const auto fleet = generate_synthetic(cfg);
  const auto& g = fleet.regimes[0];
  const SubspaceModel truth{g.basis, g.center, g.lambdas, 0.01};
  for (std::size_t u = 0; u < fleet.train.size(); ++u) {
    const auto s = distance_series(truth, fleet.train.trajectories[u].features);
    const int onset = fleet.train_truth[u].onset;
    std::vector<double> t, v;
    for (std::size_t i = static_cast<std::size_t>(onset); i < s.size(); ++i) {
      t.push_back(static_cast<double>(i));
      v.push_back(s[i]);
    }
    EXPECT_GE(oracle::spearman(t, v), 0.9) << "unit " << u;
  }
}

TEST(Smooth, IdentityAndFixedPoint) {
  const Series x{3.0, -1.0, 4.0, 1.5};
  EXPECT_EQ(smooth(x, 1.0), x);
  const Series c(9, 2.5);
  for (double f : {0.1, 0.3, 0.9}) EXPECT_EQ(smooth(c, f), c);
  EXPECT_TRUE(smooth({}, 0.3).empty());
  EXPECT_THROW(smooth(x, 0.0), ConfigError);
}

TEST(Smooth, StepRecursion) {
  EXPECT_EQ(smooth({0, 0, 1, 1}, 0.5), (Series{0, 0, 0.5, 0.75}));
}

TEST(Scale, FloorCeilingAndClamp) {
  const DistanceScaler sc{2.0, 6.0};
  const auto s = scale(sc, {2.0, 6.0, 16.0, 4.0, -1.0});
  EXPECT_EQ(s, (Series{0.0, 1.0, 1.0, 0.5, 0.0}));
}

TEST(HealthIndex, AnalyticValues) {
  EXPECT_EQ(to_health_index({0.0, 1.0, 0.25}), (Series{1.0, 0.0, 0.5}));
  EXPECT_THROW(to_health_index({1.2}), ValidationError);
  EXPECT_THROW(to_health_index({-0.1}), ValidationError);
}

TEST(HealthIndex, InverseRecoversScaledDistance) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Series d(1000);
  for (auto& v : d) v = u(rng);
  const auto s = to_health_index(d);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR((1.0 - s[i]) * (1.0 - s[i]), d[i], 1e-12);
}

TEST(HealthIndex, MonotoneInRawDistance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 12.0);
  const DistanceScaler sc{1.0, 9.0};
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng);
    const auto s = to_health_index(scale(sc, {a, b}));
    ASSERT_GE(s[0], 0.0);
    ASSERT_LE(s[0], 1.0);
    if (a >= b) {
      EXPECT_LE(s[0], s[1]);
    }
  }
}

TEST(FitScaler, ConstructedFleet) {
  std::vector<Series> fleet;
  for (int u = 0; u < 5; ++u) {
    Series s(40 + 5 * u, 1.0);
    for (std::size_t i = 25; i < s.size(); ++i) s[i] = 9.0;
    fleet.push_back(s);
  }
  // Long enough at 9.0 that the smoothed tail equals 9.0 to rounding.
  const auto sc = fit_scaler(fleet, 20, 1.0);
  EXPECT_DOUBLE_EQ(sc.floor, 1.0);
  EXPECT_DOUBLE_EQ(sc.ceiling, 9.0);
}

TEST(FitScaler, SingleUnitAndMedians) {
  const auto one = fit_scaler({{1.0, 3.0, 5.0, 10.0}}, 2, 0.5);
  EXPECT_DOUBLE_EQ(one.floor, 2.0);
  EXPECT_DOUBLE_EQ(one.ceiling, smooth({1.0, 3.0, 5.0, 10.0}, 0.5).back());
  const auto two = fit_scaler({{0.0, 4.0}, {2.0, 8.0}}, 1, 1.0);
  EXPECT_DOUBLE_EQ(two.floor, 1.0);
  EXPECT_DOUBLE_EQ(two.ceiling, 6.0);
}

TEST(FitScaler, DegenerateFleet) {
  EXPECT_THROW(fit_scaler({{5.0, 5.0, 5.0}}, 2, 0.3), NumericalError);
  EXPECT_THROW(fit_scaler({}, 2, 0.3), ValidationError);
}

TEST(HiCurve, SigmaMatchesScaledDistance) {
  const Series raw{0.5, 1.0, 2.0, 4.0, 7.0, 9.0, 12.0};
  const auto c = make_hi_curve(3, raw, DistanceScaler{1.0, 9.0}, 0.3);
  ASSERT_EQ(c.length(), raw.size());
  EXPECT_EQ(c.raw_dist, raw);
  for (std::size_t i = 0; i < c.length(); ++i) {
    EXPECT_NEAR(c.sigma[i], 1.0 - std::sqrt(c.scaled_dist[i]), 1e-12);
    EXPECT_GE(c.sigma[i], 0.0);
    EXPECT_LE(c.sigma[i], 1.0);
  }
}

TEST(HiRegression, ExactAffineTargets) {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd p(60, 3);
  for (Eigen::Index i = 0; i < 60; ++i) p.row(i) = oracle::random_vector(3, rng, 0.2).transpose();
  const Eigen::Vector3d w(0.1, -0.2, 0.05);
  const Eigen::VectorXd y = (p * w).array() + 0.5;
  const auto reg = fit_hi_regression(p, y);
  const auto yhat = predict_hi(reg, p);
  for (Eigen::Index i = 0; i < 60; ++i) EXPECT_LE(std::abs(yhat[static_cast<std::size_t>(i)] - y(i)), 1e-8);
}

TEST(HiRegression, ConstantTargets) {
  std::mt19937_64 rng(5);
  Eigen::MatrixXd p(30, 3);
  for (Eigen::Index i = 0; i < 30; ++i) p.row(i) = oracle::random_vector(3, rng).transpose();
  const auto reg = fit_hi_regression(p, Eigen::VectorXd::Constant(30, 0.7));
  EXPECT_LE(reg.weights[0].head(3).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(reg.weights[0](3), 0.7, 1e-9);
}

TEST(HiRegression, MatchesPseudoInverse) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd p(80, 3);
    Eigen::VectorXd y(80);
    for (Eigen::Index i = 0; i < 80; ++i) {
      p.row(i) = oracle::random_vector(3, rng).transpose();
      y(i) = u(rng);
    }
    Eigen::MatrixXd x(80, 4);
    x << p, Eigen::VectorXd::Ones(80);
    const Eigen::VectorXd ref = x.completeOrthogonalDecomposition().pseudoInverse() * y;
    const auto reg = fit_hi_regression(p, y);
    EXPECT_LE((reg.weights[0] - ref).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(HiRegression, PerRegimeAndErrors) {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd p(40, 2);
  Eigen::VectorXd y(40);
  std::vector<int> labels(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    p.row(i) = oracle::random_vector(2, rng).transpose();
    labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
    y(i) = i % 2 == 0 ? 0.2 : 0.9;
  }
  const auto reg = fit_hi_regression(p, y, labels, 2);
  ASSERT_EQ(reg.weights.size(), 2u);
  const auto yhat = predict_hi(reg, p, labels);
  for (Eigen::Index i = 0; i < 40; ++i) EXPECT_NEAR(yhat[static_cast<std::size_t>(i)], y(i), 1e-8);
  EXPECT_THROW(predict_hi(reg, p), ValidationError);
  EXPECT_THROW(fit_hi_regression(p.topRows(2), y.head(2)), ValidationError);
  EXPECT_THROW(predict_hi(reg, Eigen::MatrixXd::Zero(3, 3), std::vector<int>{0, 0, 0}), ValidationError);
}

TEST(PredictHi, ConstantAndClamp) {
  HiRegressor reg;
  reg.weights.push_back(Eigen::Vector3d(0, 0, 0.7));
  EXPECT_EQ(predict_hi(reg, Eigen::MatrixXd::Random(4, 2)), Series(4, 0.7));
  reg.weights[0] = Eigen::Vector3d(1.0, 0.0, 0.3);
  Eigen::MatrixXd p(3, 2);
  p << 1.0, 0, -1.0, 0, 0.2, 0;
  const auto s = predict_hi(reg, p);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_NEAR(s[2], 0.5, 1e-15);
}

TEST(HiCsv, RoundTrip) {
  std::vector<HiCurve> curves{make_hi_curve(1, {0.1, 0.7, 3.3}, DistanceScaler{0.2, 3.0}, 0.3),
                              make_hi_curve(4, {0.3, 0.25}, DistanceScaler{0.2, 3.0}, 0.3)};
  std::stringstream io;
  write_hi_csv(io, curves);
  const auto back = read_hi_csv(io);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].unit_id, 4);
  EXPECT_EQ(back[0].sigma, curves[0].sigma);
  EXPECT_EQ(back[0].raw_dist, curves[0].raw_dist);
  EXPECT_EQ(back[1].scaled_dist, curves[1].scaled_dist);
}

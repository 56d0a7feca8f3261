#pragma once

// CMAPSS-format ingestion, z-score normalization and synthetic fleets.
//
// A CMAPSS row is `unit cycle s1 s2 s3 m1 .. m21`: three operational settings
// followed by 21 sensor readings. Trajectory keeps all 24 feature columns in one
// matrix (settings first) so indices stay aligned with the file layout.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "subtrack/error.hpp"

namespace subtrack {

inline constexpr int kNumSettings = 3;
inline constexpr int kNumSensors = 21;
inline constexpr int kNumFeatures = kNumSettings + kNumSensors;

// One engine unit. Row i holds cycle i + 1; columns are settings then sensors.
struct Trajectory {
  int unit_id = 0;
  Eigen::MatrixXd features;

  Eigen::Index length() const { return features.rows(); }
  Eigen::Index num_sensors() const { return features.cols() - kNumSettings; }
  auto settings() const { return features.leftCols(kNumSettings); }
  auto sensors() const { return features.rightCols(num_sensors()); }
};

enum class SetKind { kTrain, kTest };

struct TrajectorySet {
  std::vector<Trajectory> trajectories;
  SetKind kind = SetKind::kTrain;

  std::size_t size() const { return trajectories.size(); }
  Eigen::Index num_features() const {
    return trajectories.empty() ? 0 : trajectories.front().features.cols();
  }
};

// Which columns feed the subspace tracker.
enum class FeatureSelection { kAll, kSensorsOnly };

inline Eigen::MatrixXd tracked_features(const Trajectory& traj, FeatureSelection sel) {
  if (sel == FeatureSelection::kAll) return traj.features;
  return traj.sensors();
}

// Per-cycle operating-regime labels, one vector per trajectory.
using RegimeLabels = std::vector<std::vector<int>>;

namespace detail {

inline double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("non-numeric field '" + std::string(tok) + "'", line);
  }
  return v;
}

inline int parse_int_field(std::string_view tok, std::size_t line) {
  const double v = parse_double(tok, line);
  if (v != std::floor(v) || v < 0 || v > 1e9) {
    throw ParseError("expected a non-negative integer, got '" + std::string(tok) + "'", line);
  }
  return static_cast<int>(v);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// Parses whitespace-separated CMAPSS rows. Blank lines are ignored.
inline TrajectorySet parse_cmapss(std::istream& in, SetKind kind = SetKind::kTrain,
                                  int num_sensors = kNumSensors) {
  const std::size_t fields = 2 + kNumSettings + static_cast<std::size_t>(num_sensors);
  std::map<int, std::vector<std::pair<int, std::vector<double>>>> by_unit;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    const auto toks = detail::split_ws(text);
    if (toks.empty()) continue;
    if (toks.size() != fields) {
      throw ParseError("expected " + std::to_string(fields) + " fields, got " +
                           std::to_string(toks.size()),
                       line_no);
    }
    const int unit = detail::parse_int_field(toks[0], line_no);
    const int cycle = detail::parse_int_field(toks[1], line_no);
    if (unit < 1) throw ParseError("unit id must be positive", line_no);
    std::vector<double> row(fields - 2);
    for (std::size_t j = 2; j < fields; ++j) row[j - 2] = detail::parse_double(toks[j], line_no);
    by_unit[unit].emplace_back(cycle, std::move(row));
  }
  if (by_unit.empty()) throw ValidationError("no data rows");

  TrajectorySet set;
  set.kind = kind;
  for (auto& [unit, rows] : by_unit) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    Trajectory traj;
    traj.unit_id = unit;
    traj.features.resize(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(fields - 2));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].first != static_cast<int>(i) + 1) {
        throw ValidationError("unit " + std::to_string(unit) +
                              ": cycles are not contiguous from 1 (found cycle " +
                              std::to_string(rows[i].first) + " at position " +
                              std::to_string(i + 1) + ")");
      }
      for (std::size_t j = 0; j < rows[i].second.size(); ++j) {
        traj.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            rows[i].second[j];
      }
    }
    set.trajectories.push_back(std::move(traj));
  }
  return set;
}

inline TrajectorySet load_cmapss(const std::string& path, SetKind kind = SetKind::kTrain,
                                 int num_sensors = kNumSensors) {
  auto in = detail::open_input(path);
  return parse_cmapss(in, kind, num_sensors);
}

// Writes rows in the same layout with shortest round-trip decimal text.
inline void write_cmapss(std::ostream& out, const TrajectorySet& set) {
  for (const auto& traj : set.trajectories) {
    for (Eigen::Index i = 0; i < traj.length(); ++i) {
      out << traj.unit_id << ' ' << (i + 1);
      for (Eigen::Index j = 0; j < traj.features.cols(); ++j) {
        out << ' ' << detail::format_double(traj.features(i, j));
      }
      out << '\n';
    }
  }
}

inline std::vector<double> parse_rul_targets(std::istream& in, std::size_t n_units) {
  std::vector<double> out;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    const auto toks = detail::split_ws(text);
    if (toks.empty()) continue;
    if (toks.size() != 1) throw ParseError("expected one integer per line", line_no);
    out.push_back(detail::parse_int_field(toks[0], line_no));
  }
  if (out.size() != n_units) {
    throw ValidationError("RUL file has " + std::to_string(out.size()) + " entries, expected " +
                          std::to_string(n_units));
  }
  return out;
}

inline std::vector<double> load_rul_targets(const std::string& path, std::size_t n_units) {
  auto in = detail::open_input(path);
  return parse_rul_targets(in, n_units);
}

// ---------------------------------------------------------------------------
// Normalization

inline constexpr double kConstantFeatureStd = 1e-12;

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<bool> masked;
};

// z-score statistics, one table per operating regime (a single table when
// fit without labels).
struct Normalizer {
  std::vector<FeatureStats> regimes;

  std::size_t num_regimes() const { return regimes.size(); }
  Eigen::Index num_features() const {
    return regimes.empty() ? 0 : regimes.front().mean.size();
  }

  static Normalizer identity(Eigen::Index num_features) {
    FeatureStats s{Eigen::VectorXd::Zero(num_features), Eigen::VectorXd::Ones(num_features),
                   std::vector<bool>(static_cast<std::size_t>(num_features), false)};
    return Normalizer{{s}};
  }
};

namespace detail {

inline void check_labels(const TrajectorySet& set, const RegimeLabels& labels) {
  if (labels.size() != set.size()) {
    throw ValidationError("regime labels cover " + std::to_string(labels.size()) +
                          " trajectories, set has " + std::to_string(set.size()));
  }
  for (std::size_t u = 0; u < set.size(); ++u) {
    if (static_cast<Eigen::Index>(labels[u].size()) != set.trajectories[u].length()) {
      throw ValidationError("regime labels length mismatch for unit " +
                            std::to_string(set.trajectories[u].unit_id));
    }
    for (int k : labels[u]) {
      if (k < 0) throw ValidationError("negative regime label");
    }
  }
}

}  // namespace detail

inline Normalizer fit_normalizer(const TrajectorySet& set,
                                 const std::optional<RegimeLabels>& labels = std::nullopt) {
  if (set.size() == 0) throw ValidationError("cannot fit a normalizer on an empty set");
  const Eigen::Index cols = set.num_features();
  std::size_t n_regimes = 1;
  if (labels) {
    detail::check_labels(set, *labels);
    int max_label = 0;
    for (const auto& l : *labels)
      for (int k : l) max_label = std::max(max_label, k);
    n_regimes = static_cast<std::size_t>(max_label) + 1;
  }

  std::vector<Eigen::VectorXd> sum(n_regimes, Eigen::VectorXd::Zero(cols));
  std::vector<double> count(n_regimes, 0.0);
  for (std::size_t u = 0; u < set.size(); ++u) {
    const auto& f = set.trajectories[u].features;
    if (f.cols() != cols) throw ValidationError("inconsistent feature count across units");
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      const auto k = labels ? static_cast<std::size_t>((*labels)[u][static_cast<std::size_t>(i)]) : 0;
      sum[k] += f.row(i).transpose();
      count[k] += 1.0;
    }
  }
  Normalizer norm;
  norm.regimes.resize(n_regimes);
  for (std::size_t k = 0; k < n_regimes; ++k) {
    norm.regimes[k].mean =
        count[k] > 0 ? Eigen::VectorXd(sum[k] / count[k]) : Eigen::VectorXd::Zero(cols);
  }
  std::vector<Eigen::VectorXd> sq(n_regimes, Eigen::VectorXd::Zero(cols));
  for (std::size_t u = 0; u < set.size(); ++u) {
    const auto& f = set.trajectories[u].features;
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      const auto k = labels ? static_cast<std::size_t>((*labels)[u][static_cast<std::size_t>(i)]) : 0;
      sq[k] += (f.row(i).transpose() - norm.regimes[k].mean).cwiseAbs2();
    }
  }
  for (std::size_t k = 0; k < n_regimes; ++k) {
    auto& s = norm.regimes[k];
    s.stddev = count[k] > 0 ? Eigen::VectorXd((sq[k] / count[k]).cwiseSqrt())
                            : Eigen::VectorXd::Zero(cols);
    s.masked.assign(static_cast<std::size_t>(cols), false);
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(s.stddev(j) >= kConstantFeatureStd)) {
        s.masked[static_cast<std::size_t>(j)] = true;
        s.stddev(j) = 1.0;
      }
    }
  }
  return norm;
}

inline Eigen::VectorXd apply_row(const FeatureStats& s, const Eigen::VectorXd& row) {
  Eigen::VectorXd out = (row - s.mean).cwiseQuotient(s.stddev);
  for (std::size_t j = 0; j < s.masked.size(); ++j) {
    if (s.masked[j]) out(static_cast<Eigen::Index>(j)) = 0.0;
  }
  return out;
}

inline TrajectorySet apply_normalizer(const Normalizer& norm, const TrajectorySet& set,
                                      const std::optional<RegimeLabels>& labels = std::nullopt) {
  if (norm.regimes.empty()) throw ValidationError("normalizer has no statistics");
  if (norm.num_regimes() > 1 && !labels) {
    throw ValidationError("regime-conditional normalizer requires regime labels");
  }
  if (labels) detail::check_labels(set, *labels);
  TrajectorySet out = set;
  for (std::size_t u = 0; u < out.size(); ++u) {
    auto& f = out.trajectories[u].features;
    if (f.cols() != norm.num_features()) {
      throw ValidationError("normalizer expects " + std::to_string(norm.num_features()) +
                            " features, unit " + std::to_string(out.trajectories[u].unit_id) +
                            " has " + std::to_string(f.cols()));
    }
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      std::size_t k = 0;
      if (labels) k = static_cast<std::size_t>((*labels)[u][static_cast<std::size_t>(i)]);
      if (norm.num_regimes() == 1) k = 0;
      if (k >= norm.num_regimes()) throw ValidationError("regime label out of range");
      f.row(i) = apply_row(norm.regimes[k], f.row(i).transpose()).transpose();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic fleets

struct SyntheticConfig {
  int n_units = 50;
  int D = 24;  // tracked dimension
  int d = 3;
  int K = 1;
  double noise_std = 0.01;
  double drift_onset_fraction = 0.5;
  double drift_rate = 0.02;
  std::uint64_t seed = 0;
  int min_life = 150;
  int max_life = 300;
};

// Parameters a regime's healthy data was drawn from.
struct GeneratingSubspace {
  Eigen::VectorXd center;
  Eigen::MatrixXd basis;  // D x d, orthonormal
  Eigen::VectorXd lambdas;
  Eigen::VectorXd settings;  // operational-setting centroid
};

struct UnitTruth {
  int unit_id = 0;
  int life = 0;        // failure cycle
  int onset = 0;       // last cycle without drift
  int truncation = 0;  // last observed cycle (== life for training units)
  double rul = 0.0;
};

struct SyntheticFleet {
  TrajectorySet train;
  TrajectorySet test;
  std::vector<double> true_rul;  // aligned with test units
  std::vector<UnitTruth> train_truth;
  std::vector<UnitTruth> test_truth;
  std::vector<GeneratingSubspace> regimes;
  RegimeLabels train_regimes;  // true per-cycle regime
  RegimeLabels test_regimes;
  FeatureSelection selection = FeatureSelection::kAll;
};

namespace detail {

inline Eigen::MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols,
                                          std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = n01(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

}  // namespace detail

inline void validate(const SyntheticConfig& c) {
  if (c.n_units < 1) throw ValidationError("synthetic: n_units must be >= 1");
  if (c.d < 1 || c.d >= c.D) throw ValidationError("synthetic: need 1 <= d < D");
  if (c.K < 1) throw ValidationError("synthetic: K must be >= 1");
  if (c.K == 1 && c.D <= kNumSettings) {
    throw ValidationError("synthetic: with K = 1 the tracked vector includes the settings, need D > 3");
  }
  if (!(c.noise_std >= 0.0)) throw ValidationError("synthetic: noise_std must be >= 0");
  if (!(c.drift_rate >= 0.0)) throw ValidationError("synthetic: drift_rate must be >= 0");
  if (!(c.drift_onset_fraction >= 0.0 && c.drift_onset_fraction < 1.0)) {
    throw ValidationError("synthetic: drift_onset_fraction must lie in [0, 1)");
  }
  if (c.min_life < c.d + 3 || c.max_life < c.min_life) {
    throw ValidationError("synthetic: need d + 3 <= min_life <= max_life");
  }
}

// Healthy cycles sample x = c + U z + noise with z ~ N(0, diag(lambdas)). After
// the onset cycle a per-unit direction orthogonal to the regime subspace is
// added with amplitude drift_rate * (t - onset). With K = 1 the tracked vector
// is the full row (settings included); with K > 1 settings carry the regime
// centroid and only the D sensor columns are tracked.
inline SyntheticFleet generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> n01(0.0, 1.0);

  SyntheticFleet fleet;
  fleet.selection = cfg.K == 1 ? FeatureSelection::kAll : FeatureSelection::kSensorsOnly;
  const Eigen::Index D = cfg.D;
  const Eigen::Index d = cfg.d;

  for (int k = 0; k < cfg.K; ++k) {
    GeneratingSubspace g;
    g.center.resize(D);
    for (Eigen::Index i = 0; i < D; ++i) g.center(i) = 2.0 * n01(rng);
    g.basis = detail::random_orthonormal(D, d, rng);
    g.lambdas.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) g.lambdas(i) = static_cast<double>(d - i);
    // Setting centroids on a coarse lattice stay pairwise separated.
    g.settings = Eigen::Vector3d(10.0 * (k % 3), 10.0 * ((k / 3) % 3), 10.0 * (k / 9));
    fleet.regimes.push_back(std::move(g));
  }

  std::uniform_int_distribution<int> life_dist(cfg.min_life, cfg.max_life);
  std::uniform_int_distribution<int> regime_dist(0, cfg.K - 1);

  auto make_unit = [&](int unit_id, int life, int observed, std::vector<int>& regimes_out) {
    const int onset = static_cast<int>(std::floor(cfg.drift_onset_fraction * life));
    Eigen::VectorXd g(D);
    for (Eigen::Index i = 0; i < D; ++i) g(i) = n01(rng);
    std::vector<Eigen::VectorXd> drift_dir;
    for (const auto& r : fleet.regimes) {
      Eigen::VectorXd v = g - r.basis * (r.basis.transpose() * g);
      drift_dir.push_back(v / v.norm());
    }
    const Eigen::Index cols = cfg.K == 1 ? D : kNumSettings + D;
    Trajectory traj;
    traj.unit_id = unit_id;
    traj.features.resize(observed, cols);
    regimes_out.assign(static_cast<std::size_t>(observed), 0);
    for (int t = 1; t <= observed; ++t) {
      const int k = cfg.K == 1 ? 0 : regime_dist(rng);
      regimes_out[static_cast<std::size_t>(t - 1)] = k;
      const auto& r = fleet.regimes[static_cast<std::size_t>(k)];
      Eigen::VectorXd z(d);
      for (Eigen::Index i = 0; i < d; ++i) z(i) = std::sqrt(r.lambdas(i)) * n01(rng);
      Eigen::VectorXd x = r.center + r.basis * z;
      for (Eigen::Index i = 0; i < D; ++i) x(i) += cfg.noise_std * n01(rng);
      if (t > onset) x += cfg.drift_rate * static_cast<double>(t - onset) * drift_dir[static_cast<std::size_t>(k)];
      if (cfg.K == 1) {
        traj.features.row(t - 1) = x.transpose();
      } else {
        Eigen::Vector3d s = r.settings;
        for (int i = 0; i < kNumSettings; ++i) s(i) += cfg.noise_std * n01(rng);
        traj.features.row(t - 1).head(kNumSettings) = s.transpose();
        traj.features.row(t - 1).tail(D) = x.transpose();
      }
    }
    return std::pair{std::move(traj), onset};
  };

  fleet.train.kind = SetKind::kTrain;
  fleet.test.kind = SetKind::kTest;
  for (int u = 1; u <= cfg.n_units; ++u) {
    const int life = life_dist(rng);
    std::vector<int> regimes;
    auto [traj, onset] = make_unit(u, life, life, regimes);
    fleet.train.trajectories.push_back(std::move(traj));
    fleet.train_regimes.push_back(std::move(regimes));
    fleet.train_truth.push_back({u, life, onset, life, 0.0});
  }
  for (int u = 1; u <= cfg.n_units; ++u) {
    const int life = life_dist(rng);
    const int min_cut = std::max(cfg.d + 2, (life + 3) / 4);
    std::uniform_int_distribution<int> cut_dist(min_cut, life - 1);
    const int cut = cut_dist(rng);
    std::vector<int> regimes;
    auto [traj, onset] = make_unit(u, life, cut, regimes);
    fleet.test.trajectories.push_back(std::move(traj));
    fleet.test_regimes.push_back(std::move(regimes));
    const double rul = static_cast<double>(life - cut);
    fleet.test_truth.push_back({u, life, onset, cut, rul});
    fleet.true_rul.push_back(rul);
  }
  return fleet;
}

inline void write_truth_csv(std::ostream& out, const std::vector<UnitTruth>& truth) {
  out << "unit_id,life,onset,truncation,true_rul\n";
  for (const auto& t : truth) {
    out << t.unit_id << ',' << t.life << ',' << t.onset << ',' << t.truncation << ','
        << detail::format_double(t.rul) << '\n';
  }
}

}  // namespace subtrack

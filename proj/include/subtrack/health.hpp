#pragma once

// Health-index curves: distance series -> smoothed -> fleet-scaled to [0, 1]
// -> sigma = 1 - sqrt(scaled). Also the least-squares map from subspace
// coordinates to sigma used by the regression variant.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "subtrack/dataset.hpp"
#include "subtrack/error.hpp"
#include "subtrack/multiscale.hpp"
#include "subtrack/subspace.hpp"

namespace subtrack {

using Series = std::vector<double>;

struct HiCurve {
  int unit_id = 0;
  Series sigma;
  Series raw_dist;
  Series scaled_dist;

  std::size_t length() const { return sigma.size(); }
};

inline Series distance_series(const SubspaceModel& model, const Eigen::MatrixXd& rows) {
  Series out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = mahalanobis(model, rows.row(i).transpose());
  }
  return out;
}

inline Series distance_series(const MultiModel& mm, const Eigen::MatrixXd& rows) {
  Series out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = assign(mm, rows.row(i).transpose()).distance;
  }
  return out;
}

// Scoring of a unit against a frozen model: min distance, winning regime and
// the coordinates in the winner's basis for every cycle.
struct FrozenTrack {
  Series distance;
  std::vector<int> regime;
  Eigen::MatrixXd projections;  // n x d
};

inline FrozenTrack track_frozen(const MultiModel& mm, const Eigen::MatrixXd& rows) {
  FrozenTrack t;
  const Eigen::Index n = rows.rows();
  const Eigen::Index d = mm.models.front().intrinsic_dim();
  t.distance.resize(static_cast<std::size_t>(n));
  t.regime.resize(static_cast<std::size_t>(n));
  t.projections.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = rows.row(i).transpose();
    const Assignment a = assign(mm, x);
    t.distance[static_cast<std::size_t>(i)] = a.distance;
    t.regime[static_cast<std::size_t>(i)] = a.index;
    t.projections.row(i) = project(mm.models[static_cast<std::size_t>(a.index)], x).transpose();
  }
  return t;
}

// Exponential moving average, y_1 = x_1. factor = 1 is the identity.
inline Series smooth(const Series& x, double factor) {
  if (!(factor > 0.0 && factor <= 1.0)) throw ConfigError("smoothing factor must lie in (0, 1]");
  Series y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t t = 1; t < x.size(); ++t) y[t] = factor * x[t] + (1.0 - factor) * y[t - 1];
  return y;
}

struct DistanceScaler {
  double floor = 0.0;
  double ceiling = 1.0;

  void validate() const {
    if (!std::isfinite(floor) || !std::isfinite(ceiling) || !(floor >= 0.0) ||
        !(ceiling > floor)) {
      throw ValidationError("distance scaler: invariant ceiling > floor >= 0 violated");
    }
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// floor: median over units of the mean raw distance over the first
// healthy_cycles; ceiling: median over units of the smoothed distance at the
// final (failure) cycle.
inline DistanceScaler fit_scaler(const std::vector<Series>& train_raw, int healthy_cycles,
                                 double smoothing) {
  if (train_raw.empty()) throw ValidationError("fit_scaler: empty fleet");
  if (healthy_cycles < 1) throw ConfigError("fit_scaler: healthy_cycles must be >= 1");
  std::vector<double> healthy_means, finals;
  for (const auto& raw : train_raw) {
    if (raw.empty()) throw ValidationError("fit_scaler: empty distance series");
    const std::size_t h = std::min(raw.size(), static_cast<std::size_t>(healthy_cycles));
    double s = 0.0;
    for (std::size_t i = 0; i < h; ++i) s += raw[i];
    healthy_means.push_back(s / static_cast<double>(h));
    finals.push_back(smooth(raw, smoothing).back());
  }
  DistanceScaler sc{detail::median(healthy_means), detail::median(finals)};
  if (!(sc.ceiling > sc.floor)) {
    throw NumericalError("fit_scaler: degenerate fleet, failure distance " +
                         std::to_string(sc.ceiling) + " <= healthy distance " +
                         std::to_string(sc.floor));
  }
  return sc;
}

inline Series scale(const DistanceScaler& sc, const Series& raw) {
  Series out(raw.size());
  const double span = sc.ceiling - sc.floor;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = std::clamp((raw[i] - sc.floor) / span, 0.0, 1.0);
  }
  return out;
}

inline Series to_health_index(const Series& scaled) {
  Series out(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    const double v = scaled[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("to_health_index: scaled distance " + std::to_string(v) +
                            " outside [0, 1] at index " + std::to_string(i));
    }
    out[i] = 1.0 - std::sqrt(v);
  }
  return out;
}

inline HiCurve make_hi_curve(int unit_id, Series raw, const DistanceScaler& sc, double smoothing) {
  HiCurve c;
  c.unit_id = unit_id;
  c.scaled_dist = scale(sc, smooth(raw, smoothing));
  c.sigma = to_health_index(c.scaled_dist);
  c.raw_dist = std::move(raw);
  return c;
}

// ---------------------------------------------------------------------------
// Least-squares health-index regression on subspace coordinates.

inline constexpr double kRidgeJitter = 1e-10;

// weights[k] = (slopes..., intercept) for regime k.
struct HiRegressor {
  std::vector<Eigen::VectorXd> weights;

  Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().size() - 1; }

  void validate() const {
    if (weights.empty()) throw ValidationError("hi regressor: no weight vectors");
    for (const auto& w : weights) {
      if (w.size() != weights.front().size() || w.size() < 2) {
        throw ValidationError("hi regressor: inconsistent weight sizes");
      }
      if (!w.allFinite()) throw ValidationError("hi regressor: non-finite weights");
    }
  }
};

namespace detail {

inline Eigen::VectorXd solve_affine_ls(const Eigen::MatrixXd& p, const Eigen::VectorXd& y) {
  const Eigen::Index n = p.rows();
  const Eigen::Index d = p.cols();
  if (n < d + 1) {
    throw ValidationError("fit_hi_regression: " + std::to_string(n) + " samples for " +
                          std::to_string(d + 1) + " coefficients");
  }
  Eigen::MatrixXd x(n, d + 1);
  x.leftCols(d) = p;
  x.col(d).setOnes();
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += kRidgeJitter;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw NumericalError("fit_hi_regression: singular system");
  Eigen::VectorXd w = ldlt.solve(x.transpose() * y);
  if (!w.allFinite()) throw NumericalError("fit_hi_regression: non-finite solution");
  return w;
}

}  // namespace detail

inline HiRegressor fit_hi_regression(const Eigen::MatrixXd& projections, const Eigen::VectorXd& targets,
                                     const std::optional<std::vector<int>>& labels = std::nullopt,
                                     int num_regimes = 1) {
  if (projections.rows() != targets.size()) {
    throw ValidationError("fit_hi_regression: projections and targets differ in length");
  }
  if ((targets.array() < 0.0).any() || (targets.array() > 1.0).any()) {
    throw ValidationError("fit_hi_regression: targets must lie in [0, 1]");
  }
  HiRegressor reg;
  if (!labels) {
    reg.weights.push_back(detail::solve_affine_ls(projections, targets));
    return reg;
  }
  if (static_cast<Eigen::Index>(labels->size()) != projections.rows()) {
    throw ValidationError("fit_hi_regression: label count mismatch");
  }
  for (int k = 0; k < num_regimes; ++k) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < labels->size(); ++i)
      if ((*labels)[i] == k) idx.push_back(static_cast<Eigen::Index>(i));
    Eigen::MatrixXd p(static_cast<Eigen::Index>(idx.size()), projections.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      p.row(static_cast<Eigen::Index>(i)) = projections.row(idx[i]);
      y(static_cast<Eigen::Index>(i)) = targets(idx[i]);
    }
    reg.weights.push_back(detail::solve_affine_ls(p, y));
  }
  return reg;
}

inline Series predict_hi(const HiRegressor& reg, const Eigen::MatrixXd& projections,
                         const std::optional<std::vector<int>>& labels = std::nullopt) {
  reg.validate();
  if (projections.cols() != reg.input_dim()) {
    throw ValidationError("predict_hi: projections have " + std::to_string(projections.cols()) +
                          " columns, regressor expects " + std::to_string(reg.input_dim()));
  }
  if (labels && static_cast<Eigen::Index>(labels->size()) != projections.rows()) {
    throw ValidationError("predict_hi: label count mismatch");
  }
  const Eigen::Index d = reg.input_dim();
  Series out(static_cast<std::size_t>(projections.rows()));
  for (Eigen::Index i = 0; i < projections.rows(); ++i) {
    std::size_t k = 0;
    if (reg.weights.size() > 1) {
      if (!labels) throw ValidationError("predict_hi: per-regime regressor needs labels");
      k = static_cast<std::size_t>((*labels)[static_cast<std::size_t>(i)]);
      if (k >= reg.weights.size()) throw ValidationError("predict_hi: regime label out of range");
    }
    const auto& w = reg.weights[k];
    const double yhat = projections.row(i).dot(w.head(d)) + w(d);
    out[static_cast<std::size_t>(i)] = std::clamp(yhat, 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: unit_id,cycle,raw_dist,scaled_dist,sigma

inline void write_hi_csv(std::ostream& out, const std::vector<HiCurve>& curves) {
  out << "unit_id,cycle,raw_dist,scaled_dist,sigma\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.length(); ++i) {
      out << c.unit_id << ',' << (i + 1) << ',' << detail::format_double(c.raw_dist[i]) << ','
          << detail::format_double(c.scaled_dist[i]) << ',' << detail::format_double(c.sigma[i])
          << '\n';
    }
  }
}

inline std::vector<HiCurve> read_hi_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<HiCurve> curves;
  std::map<int, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line.rfind("unit_id,cycle,raw_dist,scaled_dist,sigma", 0) != 0) {
        throw ParseError("unexpected HI CSV header", line_no);
      }
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view sv(line);
    std::size_t pos = 0;
    while (true) {
      const auto comma = sv.find(',', pos);
      f.push_back(sv.substr(pos, comma == std::string_view::npos ? sv.npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 5) throw ParseError("expected 5 CSV fields", line_no);
    const int unit = detail::parse_int_field(f[0], line_no);
    const int cycle = detail::parse_int_field(f[1], line_no);
    auto [it, inserted] = index.try_emplace(unit, curves.size());
    if (inserted) curves.push_back(HiCurve{unit, {}, {}, {}});
    auto& c = curves[it->second];
    if (cycle != static_cast<int>(c.length()) + 1) {
      throw ParseError("non-contiguous cycle for unit " + std::to_string(unit), line_no);
    }
    c.raw_dist.push_back(detail::parse_double(f[2], line_no));
    c.scaled_dist.push_back(detail::parse_double(f[3], line_no));
    c.sigma.push_back(detail::parse_double(f[4], line_no));
  }
  return curves;
}

}  // namespace subtrack

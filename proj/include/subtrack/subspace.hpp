#pragma once

// Single-subspace tracker.
//
// Healthy data is modeled as lying near an affine subspace {c + U1 z}. The
// approximate Mahalanobis distance of a sample is
//
//   delta * (x - c)^T U1 diag(lambdas)^-1 U1^T (x - c) + || U2^T (x - c) ||^2
//
// where U2 spans the orthogonal complement of U1. The complement term is the
// squared norm of the projection residual, so U2 is never formed.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "subtrack/error.hpp"

namespace subtrack {

inline constexpr double kLambdaMin = 1e-8;
inline constexpr double kDefaultDelta = 0.01;
inline constexpr double kOrthonormalityTol = 1e-8;

struct SubspaceModel {
  Eigen::MatrixXd basis;    // D x d, orthonormal columns
  Eigen::VectorXd center;   // D
  Eigen::VectorXd lambdas;  // d spreads, each >= kLambdaMin
  double delta = kDefaultDelta;

  Eigen::Index dim() const { return center.size(); }
  Eigen::Index intrinsic_dim() const { return basis.cols(); }

  // Throws ValidationError naming the first violated invariant.
  void validate() const {
    const Eigen::Index D = center.size();
    const Eigen::Index d = basis.cols();
    if (D < 1 || d < 1) throw ValidationError("subspace model: empty dimensions");
    if (basis.rows() != D) throw ValidationError("subspace model: basis rows != D");
    if (lambdas.size() != d) throw ValidationError("subspace model: lambdas size != d");
    if (d >= D) throw ValidationError("subspace model: invariant d < D violated");
    if (!basis.allFinite() || !center.allFinite() || !lambdas.allFinite() ||
        !std::isfinite(delta)) {
      throw ValidationError("subspace model: non-finite parameter");
    }
    if (!(delta > 0.0)) throw ValidationError("subspace model: invariant delta > 0 violated");
    if ((lambdas.array() <= 0.0).any()) {
      throw ValidationError("subspace model: invariant lambda_i > 0 violated");
    }
    const double err =
        (basis.transpose() * basis - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
    if (err > kOrthonormalityTol) {
      throw ValidationError("subspace model: invariant U1^T U1 = I violated (max error " +
                            std::to_string(err) + ")");
    }
  }
};

struct TrainConfig {
  double alpha = 0.87;  // forgetting factor of the center/spread averages
  double eta = 0.01;    // basis step size
  int max_epochs = 100;
  double rel_tol = 1e-4;
  double lambda_min = kLambdaMin;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be finite and >= 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(rel_tol > 0.0)) throw ConfigError("rel_tol must be > 0");
    if (!(lambda_min > 0.0)) throw ConfigError("lambda_min must be > 0");
  }
};

namespace detail {

inline void check_dim(const SubspaceModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.dim()) {
    throw ValidationError("dimension mismatch: model D = " + std::to_string(m.dim()) +
                          ", sample has " + std::to_string(x.size()));
  }
}

// Flip each column so its largest-magnitude entry is positive.
inline void fix_column_signs(Eigen::MatrixXd& q) {
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    Eigen::Index arg = 0;
    q.col(j).cwiseAbs().maxCoeff(&arg);
    if (q(arg, j) < 0.0) q.col(j) = -q.col(j);
  }
}

}  // namespace detail

// Modified Gram-Schmidt, column order preserved, deterministic signs.
inline Eigen::MatrixXd orthonormalize(Eigen::MatrixXd q) {
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    for (Eigen::Index k = 0; k < j; ++k) {
      q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
    }
    const double n = q.col(j).norm();
    if (!(n > 1e-12) || !std::isfinite(n)) {
      throw NumericalError("orthonormalization failed: column " + std::to_string(j) +
                           " is degenerate");
    }
    q.col(j) /= n;
  }
  detail::fix_column_signs(q);
  return q;
}

// Batch PCA over a healthy window (n x D). Spreads are floored at lambda_min.
inline SubspaceModel init_subspace(const Eigen::MatrixXd& window, int d,
                                   double delta = kDefaultDelta,
                                   double lambda_min = kLambdaMin) {
  const Eigen::Index n = window.rows();
  const Eigen::Index D = window.cols();
  if (d < 1 || d >= D) throw ValidationError("init_subspace: need 1 <= d < D");
  if (n <= d) {
    throw ValidationError("init_subspace: insufficient data (" + std::to_string(n) +
                          " rows for d = " + std::to_string(d) + ")");
  }
  if (!window.allFinite()) throw ValidationError("init_subspace: non-finite input");
  if (!(delta > 0.0)) throw ValidationError("init_subspace: delta must be > 0");

  SubspaceModel m;
  m.delta = delta;
  m.center = window.colwise().mean().transpose();
  const Eigen::MatrixXd centered = window.rowwise() - m.center.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericalError("init_subspace: eigensolver failed");
  // Eigen sorts ascending; take the top d in descending order.
  m.basis.resize(D, d);
  m.lambdas.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    m.basis.col(i) = es.eigenvectors().col(D - 1 - i);
    m.lambdas(i) = std::max(es.eigenvalues()(D - 1 - i), lambda_min);
  }
  detail::fix_column_signs(m.basis);
  return m;
}

struct DistanceTerms {
  double in_subspace = 0.0;  // delta-weighted quadratic form
  double residual = 0.0;     // off-subspace energy

  double total() const { return in_subspace + residual; }
};

inline DistanceTerms distance_terms(const SubspaceModel& m, const Eigen::VectorXd& x) {
  detail::check_dim(m, x);
  const Eigen::VectorXd v = x - m.center;
  const Eigen::VectorXd z = m.basis.transpose() * v;
  DistanceTerms t;
  t.in_subspace = m.delta * (z.array().square() / m.lambdas.array()).sum();
  t.residual = (v - m.basis * z).squaredNorm();
  return t;
}

inline double mahalanobis(const SubspaceModel& m, const Eigen::VectorXd& x) {
  return distance_terms(m, x).total();
}

// Coordinates of x - c in the subspace basis.
inline Eigen::VectorXd project(const SubspaceModel& m, const Eigen::VectorXd& x) {
  detail::check_dim(m, x);
  return m.basis.transpose() * (x - m.center);
}

// One stochastic step. The center and spreads follow exponential moving
// averages with weight alpha; the basis takes an Oja-type rank-one step along
// residual * coords^T and is re-orthonormalized.
inline SubspaceModel update(SubspaceModel m, const Eigen::VectorXd& x, const TrainConfig& cfg) {
  detail::check_dim(m, x);
  if (!x.allFinite()) throw NumericalError("update: non-finite sample");
  const double a = cfg.alpha;
  m.center = a * m.center + (1.0 - a) * x;
  const Eigen::VectorXd v = x - m.center;
  const Eigen::VectorXd z = m.basis.transpose() * v;
  const Eigen::VectorXd w = v - m.basis * z;
  if (cfg.eta != 0.0 && !w.isZero(0.0) && !z.isZero(0.0)) {
    m.basis = orthonormalize(m.basis + cfg.eta * w * z.transpose());
  }
  for (Eigen::Index i = 0; i < m.lambdas.size(); ++i) {
    m.lambdas(i) = std::max(a * m.lambdas(i) + (1.0 - a) * z(i) * z(i), cfg.lambda_min);
  }
  if (!m.center.allFinite() || !m.basis.allFinite() || !m.lambdas.allFinite()) {
    throw NumericalError("update: parameters became non-finite");
  }
  return m;
}

struct TrainResult {
  SubspaceModel model;
  // trace[0] is the mean distance of the initial model over the healthy rows;
  // trace[e] is the mean pre-update distance during epoch e.
  std::vector<double> trace;
  int epochs = 0;
  bool converged = false;
};

inline bool relative_change_below(double prev, double cur, double rel_tol) {
  const double diff = std::abs(cur - prev);
  if (diff == 0.0) return true;
  if (prev == 0.0) return false;
  return diff / std::abs(prev) < rel_tol;
}

inline TrainResult train_until_converged(SubspaceModel model, const Eigen::MatrixXd& healthy,
                                         const TrainConfig& cfg) {
  cfg.validate();
  if (healthy.rows() == 0) throw ValidationError("train_until_converged: empty healthy set");
  if (healthy.cols() != model.dim()) throw ValidationError("train_until_converged: dimension mismatch");

  TrainResult res;
  double baseline = 0.0;
  for (Eigen::Index i = 0; i < healthy.rows(); ++i) {
    baseline += mahalanobis(model, healthy.row(i).transpose());
  }
  res.trace.push_back(baseline / static_cast<double>(healthy.rows()));

  for (int e = 1; e <= cfg.max_epochs; ++e) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < healthy.rows(); ++i) {
      const Eigen::VectorXd x = healthy.row(i).transpose();
      sum += mahalanobis(model, x);
      model = update(std::move(model), x, cfg);
    }
    res.trace.push_back(sum / static_cast<double>(healthy.rows()));
    res.epochs = e;
    if (relative_change_below(res.trace[res.trace.size() - 2], res.trace.back(), cfg.rel_tol)) {
      res.converged = true;
      break;
    }
  }
  res.model = std::move(model);
  return res;
}

// Largest principal angle (radians) between the column spans of two
// orthonormal bases of equal width.
inline double largest_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b);
  const double smallest = svd.singularValues().minCoeff();
  return std::acos(std::clamp(smallest, -1.0, 1.0));
}

}  // namespace subtrack

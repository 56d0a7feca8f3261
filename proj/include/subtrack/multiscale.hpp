#pragma once

// K subspace models over a partition of the input space by operating regime.
// Each sample is scored by (and, while tracking, updates) the model with the
// smallest approximate Mahalanobis distance.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "subtrack/error.hpp"
#include "subtrack/subspace.hpp"

namespace subtrack {

struct Clustering {
  std::vector<int> labels;    // one per input row, in input order
  Eigen::MatrixXd centroids;  // K x dim, lexicographically ordered
};

namespace detail {

inline bool lex_less(const Eigen::MatrixXd& p, Eigen::Index a, Eigen::Index b) {
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    if (p(a, j) != p(b, j)) return p(a, j) < p(b, j);
  }
  return false;
}

inline int nearest_row(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    const double dist = (centroids.row(k).transpose() - x).squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace detail

// Index of the closest centroid (squared Euclidean; ties go to the lowest index).
inline int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x) {
  if (centroids.cols() != x.size()) throw ValidationError("nearest_centroid: dimension mismatch");
  return detail::nearest_row(centroids, x);
}

// Seeded k-means (k-means++ initialization, Lloyd iterations). Points are put
// in lexicographic order before seeding so the result depends only on the
// multiset of points; clusters are numbered by lexicographic centroid order.
inline Clustering cluster_regimes(const Eigen::MatrixXd& points, int K, std::uint64_t seed,
                                  int max_iter = 300) {
  const Eigen::Index n = points.rows();
  if (K < 1) throw ValidationError("cluster_regimes: K must be >= 1");
  if (!points.allFinite()) throw ValidationError("cluster_regimes: non-finite settings");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return detail::lex_less(points, a, b); });
  Eigen::MatrixXd sorted(n, points.cols());
  for (Eigen::Index i = 0; i < n; ++i) sorted.row(i) = points.row(order[static_cast<std::size_t>(i)]);

  Eigen::Index distinct = n > 0 ? 1 : 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (sorted.row(i) != sorted.row(i - 1)) ++distinct;
  }
  if (distinct < K) {
    throw ValidationError("cluster_regimes: " + std::to_string(distinct) +
                          " distinct points for K = " + std::to_string(K));
  }

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centroids(K, points.cols());
  Eigen::VectorXd min_d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  {
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centroids.row(0) = sorted.row(first(rng));
  }
  for (int k = 1; k < K; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      min_d2(i) = std::min(min_d2(i), (sorted.row(i) - centroids.row(k - 1)).squaredNorm());
    }
    const double total = min_d2.sum();
    std::uniform_real_distribution<double> u(0.0, total);
    const double r = u(rng);
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (min_d2(i) <= 0.0) continue;
      acc += min_d2(i);
      pick = i;
      if (acc >= r) break;
    }
    centroids.row(k) = sorted.row(pick);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = detail::nearest_row(centroids, sorted.row(i).transpose());
      if (labels[static_cast<std::size_t>(i)] != k) {
        labels[static_cast<std::size_t>(i)] = k;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, points.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += sorted.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    bool reseeded = false;
    for (int k = 0; k < K; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) {
        centroids.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its own centroid.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double dist =
            (sorted.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      centroids.row(k) = sorted.row(far);
      labels[static_cast<std::size_t>(far)] = k;
      reseeded = true;
    }
    if (!changed && !reseeded && iter > 0) break;
  }

  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return detail::lex_less(centroids, a, b); });
  std::vector<int> relabel(static_cast<std::size_t>(K));
  Clustering out;
  out.centroids.resize(K, points.cols());
  for (int k = 0; k < K; ++k) {
    relabel[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = k;
    out.centroids.row(k) = centroids.row(perm[static_cast<std::size_t>(k)]);
  }
  out.labels.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        relabel[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  return out;
}

struct MultiModel {
  std::vector<SubspaceModel> models;
  Eigen::MatrixXd centroids;  // K x 3 operating-setting centers

  int K() const { return static_cast<int>(models.size()); }
  Eigen::Index dim() const { return models.empty() ? 0 : models.front().dim(); }

  void validate() const {
    if (models.empty()) throw ValidationError("multi model: invariant K >= 1 violated");
    if (centroids.rows() != K()) throw ValidationError("multi model: centroid count != K");
    for (const auto& m : models) {
      m.validate();
      if (m.dim() != dim()) throw ValidationError("multi model: members disagree on D");
    }
    for (Eigen::Index a = 0; a < centroids.rows(); ++a)
      for (Eigen::Index b = a + 1; b < centroids.rows(); ++b)
        if (centroids.row(a) == centroids.row(b)) {
          throw ValidationError("multi model: invariant centroids pairwise distinct violated");
        }
  }
};

// Wraps one model; the centroid is only a placeholder for the single regime.
inline MultiModel single_model(SubspaceModel m, Eigen::Index settings_dim = 3) {
  MultiModel mm;
  mm.models.push_back(std::move(m));
  mm.centroids = Eigen::MatrixXd::Zero(1, settings_dim);
  return mm;
}

struct Assignment {
  int index = 0;
  double distance = 0.0;
};

inline Assignment assign(const MultiModel& mm, const Eigen::VectorXd& x) {
  if (mm.models.empty()) throw ValidationError("assign: empty multi model");
  Assignment best{0, mahalanobis(mm.models[0], x)};
  for (int k = 1; k < mm.K(); ++k) {
    const double dist = mahalanobis(mm.models[static_cast<std::size_t>(k)], x);
    if (dist < best.distance) best = {k, dist};
  }
  return best;
}

inline MultiModel update_winner(MultiModel mm, const Eigen::VectorXd& x, const TrainConfig& cfg) {
  const int k = assign(mm, x).index;
  auto& target = mm.models[static_cast<std::size_t>(k)];
  target = update(std::move(target), x, cfg);
  return mm;
}

struct MultiTrainResult {
  MultiModel model;
  std::vector<double> trace;  // same layout as TrainResult::trace, min distances
  int epochs = 0;
  bool converged = false;
};

inline MultiTrainResult train_multi_until_converged(MultiModel mm, const Eigen::MatrixXd& healthy,
                                                    const TrainConfig& cfg) {
  cfg.validate();
  if (healthy.rows() == 0) throw ValidationError("train_multi_until_converged: empty healthy set");
  if (healthy.cols() != mm.dim()) {
    throw ValidationError("train_multi_until_converged: dimension mismatch");
  }
  MultiTrainResult res;
  double baseline = 0.0;
  for (Eigen::Index i = 0; i < healthy.rows(); ++i) {
    baseline += assign(mm, healthy.row(i).transpose()).distance;
  }
  res.trace.push_back(baseline / static_cast<double>(healthy.rows()));
  for (int e = 1; e <= cfg.max_epochs; ++e) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < healthy.rows(); ++i) {
      const Eigen::VectorXd x = healthy.row(i).transpose();
      const Assignment a = assign(mm, x);
      sum += a.distance;
      auto& target = mm.models[static_cast<std::size_t>(a.index)];
      target = update(std::move(target), x, cfg);
    }
    res.trace.push_back(sum / static_cast<double>(healthy.rows()));
    res.epochs = e;
    if (relative_change_below(res.trace[res.trace.size() - 2], res.trace.back(), cfg.rel_tol)) {
      res.converged = true;
      break;
    }
  }
  res.model = std::move(mm);
  return res;
}

}  // namespace subtrack

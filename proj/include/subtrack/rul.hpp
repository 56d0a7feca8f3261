#pragma once

// Similarity-based remaining-useful-life estimation. A truncated test curve is
// slid along each training curve; every (training unit, lag) pair with full
// overlap proposes RUL = L_train - L_test - lag, weighted by
// exp(-mean squared curve difference / beta).

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "subtrack/error.hpp"
#include "subtrack/health.hpp"

namespace subtrack {

struct MatchConfig {
  int tau1 = 1;
  int tau2 = 40;
  double beta = 0.0235;

  void validate() const {
    if (tau1 < 0 || tau2 < tau1) throw ConfigError("match config: need 0 <= tau1 <= tau2");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("match config: beta must be > 0");
  }
};

// Mean squared difference between test[i] and train[i + tau]; nullopt when the
// shifted test curve does not fit inside the training curve.
inline std::optional<double> curve_distance(std::span<const double> test,
                                            std::span<const double> train, int tau) {
  if (tau < 0 || test.empty() || test.size() + static_cast<std::size_t>(tau) > train.size()) {
    return std::nullopt;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double diff = test[i] - train[i + static_cast<std::size_t>(tau)];
    sum += diff * diff;
  }
  return sum / static_cast<double>(test.size());
}

inline double similarity(double d2, double beta) { return std::exp(-d2 / beta); }

struct CandidateRul {
  double value = 0.0;
  bool clamped = false;
};

inline CandidateRul candidate_rul(std::size_t train_length, std::size_t test_length, int tau) {
  const double raw = static_cast<double>(train_length) - static_cast<double>(test_length) -
                     static_cast<double>(tau);
  if (raw < 0.0) return {0.0, true};
  return {raw, false};
}

struct RulCandidate {
  int train_unit = 0;
  int tau = 0;
  double rul = 0.0;
  double similarity = 0.0;
  bool clamped = false;
};

struct RulEstimate {
  int unit_id = 0;
  double estimate = 0.0;
  std::vector<RulCandidate> candidates;
  double sum_similarity = 0.0;
  bool underflow_fallback = false;  // all weights underflowed; plain mean used
  int n_clamped = 0;
};

// Weighted average of all candidates. Terms are summed in sorted order so the
// result does not depend on library order.
inline RulEstimate estimate_rul(const HiCurve& test, const std::vector<HiCurve>& library,
                                const MatchConfig& cfg) {
  cfg.validate();
  RulEstimate est;
  est.unit_id = test.unit_id;
  for (const auto& train : library) {
    for (int tau = cfg.tau1; tau <= cfg.tau2; ++tau) {
      const auto d2 = curve_distance(test.sigma, train.sigma, tau);
      if (!d2) continue;
      const CandidateRul c = candidate_rul(train.length(), test.length(), tau);
      est.candidates.push_back({train.unit_id, tau, c.value, similarity(*d2, cfg.beta), c.clamped});
      if (c.clamped) ++est.n_clamped;
    }
  }
  if (est.candidates.empty()) {
    throw NoMatchError("estimate_rul: no training curve overlaps test unit " +
                       std::to_string(test.unit_id) + " (length " +
                       std::to_string(test.length()) + ") for lags " + std::to_string(cfg.tau1) +
                       ".." + std::to_string(cfg.tau2));
  }

  std::vector<std::pair<double, double>> terms;  // (similarity, rul)
  terms.reserve(est.candidates.size());
  double lo = est.candidates.front().rul;
  double hi = lo;
  for (const auto& c : est.candidates) {
    terms.emplace_back(c.similarity, c.rul);
    lo = std::min(lo, c.rul);
    hi = std::max(hi, c.rul);
  }
  std::sort(terms.begin(), terms.end());
  double sum_s = 0.0;
  double sum_sr = 0.0;
  for (const auto& [s, r] : terms) {
    sum_s += s;
    sum_sr += s * r;
  }
  est.sum_similarity = sum_s;
  if (sum_s > 0.0) {
    est.estimate = sum_sr / sum_s;
  } else {
    double sum_r = 0.0;
    for (const auto& [s, r] : terms) sum_r += r;
    est.estimate = sum_r / static_cast<double>(terms.size());
    est.underflow_fallback = true;
  }
  est.estimate = std::clamp(est.estimate, lo, hi);
  return est;
}

// CSV: unit_id,estimated_rul,true_rul,error,n_candidates,sum_similarity
inline void write_rul_csv(std::ostream& out, const std::vector<RulEstimate>& estimates,
                          const std::optional<std::vector<double>>& truth = std::nullopt) {
  out << "unit_id,estimated_rul,true_rul,error,n_candidates,sum_similarity\n";
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    out << e.unit_id << ',' << detail::format_double(e.estimate) << ',';
    if (truth) {
      out << detail::format_double((*truth)[i]) << ','
          << detail::format_double(e.estimate - (*truth)[i]);
    } else {
      out << ',';
    }
    out << ',' << e.candidates.size() << ',' << detail::format_double(e.sum_similarity) << '\n';
  }
}

}  // namespace subtrack

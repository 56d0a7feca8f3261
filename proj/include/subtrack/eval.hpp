#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subtrack/error.hpp"

namespace subtrack {

// Root mean squared error, normalized by the number of units.
inline double rmse(std::span<const double> errors) {
  if (errors.empty()) throw ValidationError("rmse: empty error list");
  double s = 0.0;
  for (double e : errors) s += e * e;
  return std::sqrt(s / static_cast<double>(errors.size()));
}

// Asymmetric exponential penalty: exp(|e| / 13) - 1 for early predictions
// (e < 0), exp(|e| / 10) - 1 for late ones. e = estimate - truth.
inline double score(std::span<const double> errors) {
  if (errors.empty()) throw ValidationError("score: empty error list");
  double s = 0.0;
  for (double e : errors) {
    const double gamma = e < 0.0 ? 1.0 / 13.0 : 1.0 / 10.0;
    s += std::expm1(gamma * std::abs(e));
  }
  return s;
}

// Capped linear target: min(T - t, T - t_d).
inline double piecewise_rul(double failure_time, double onset, double t) {
  if (!(onset >= 0.0 && onset < failure_time)) {
    throw ValidationError("piecewise_rul: need 0 <= t_d < T");
  }
  if (!(t >= 0.0 && t <= failure_time)) throw ValidationError("piecewise_rul: t outside [0, T]");
  return std::min(failure_time - t, failure_time - onset);
}

struct RulRow {
  int unit_id = 0;
  double estimate = 0.0;
  double truth = 0.0;
  double error = 0.0;  // estimate - truth
};

// Published results of other methods on the four CMAPSS subsets, shown next
// to a benchmark run for orientation. Negative entries mean "not reported".
struct ReferenceResult {
  std::string_view method;
  std::array<double, 4> rmse;   // FD001..FD004
  std::array<double, 4> score;
};

inline constexpr std::array<ReferenceResult, 6> kReferenceResults{{
    {"SVR", {20.96, 42.00, 21.05, 45.35}, {1380, 5.90e5, 1603, 3.71e5}},
    {"CNN", {18.45, 30.29, 19.82, 29.16}, {1290, 1.36e4, 1602, 7892}},
    {"Deep LSTM", {16.14, 24.49, 16.18, 28.17}, {338, 4452, 852, 5554}},
    {"LSTM-ED", {23.36, -1, -1, -1}, {1260, -1, -1, -1}},
    {"SST", {16.22, 30.21, 17.02, 28.21}, {978, 4230, 822, 4401}},
    {"SST-LR", {15.02, 29.12, 16.95, 26.03}, {597, 3351, 634, 3381}},
}};

// 0..3 for FD001..FD004, nullopt otherwise.
inline std::optional<std::size_t> cmapss_subset_index(std::string_view dataset) {
  static constexpr std::array<std::string_view, 4> kIds{"FD001", "FD002", "FD003", "FD004"};
  for (std::size_t i = 0; i < kIds.size(); ++i)
    if (dataset == kIds[i]) return i;
  return std::nullopt;
}

namespace detail {

inline std::string fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

inline std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

inline std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace detail

// Aligned-column metrics table, plus reference rows for known CMAPSS subsets.
inline void write_metrics_table(std::ostream& out, std::string_view dataset, std::string_view label,
                                double rmse_value, double score_value) {
  out << detail::pad_right("method", 12) << detail::pad_left("RMSE", 10)
      << detail::pad_left("score", 12) << '\n';
  out << std::string(34, '-') << '\n';
  if (const auto idx = cmapss_subset_index(dataset)) {
    for (const auto& ref : kReferenceResults) {
      const double r = ref.rmse[*idx];
      const double s = ref.score[*idx];
      out << detail::pad_right(std::string(ref.method) + " (ref)", 12)
          << detail::pad_left(r < 0 ? "--" : detail::fixed(r, 2), 10)
          << detail::pad_left(s < 0 ? "--" : detail::fixed(s, 0), 12) << '\n';
    }
  }
  out << detail::pad_right(std::string(label), 12) << detail::pad_left(detail::fixed(rmse_value, 2), 10)
      << detail::pad_left(detail::fixed(score_value, 1), 12) << '\n';
}

}  // namespace subtrack

#pragma once

// Versioned JSON documents for trained artifacts. Every loader checks the
// version and kind tags and re-validates the model invariants.

#include <Eigen/Dense>

#include <json.hpp>

#include <string>
#include <vector>

#include "subtrack/dataset.hpp"
#include "subtrack/error.hpp"
#include "subtrack/health.hpp"
#include "subtrack/multiscale.hpp"
#include "subtrack/subspace.hpp"

namespace subtrack {

inline constexpr int kFormatVersion = 1;

using Json = nlohmann::json;

namespace detail {

inline Json to_json_vec(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vec_from_json(const Json& j, const char* field) {
  if (!j.is_array()) throw ValidationError(std::string("field '") + field + "' must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(std::string("field '") + field + "' must be numeric");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

// Rows of the returned list are the matrix columns.
inline Json cols_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(to_json_vec(m.col(j)));
  return out;
}

inline Json rows_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json_vec(m.row(i).transpose()));
  return out;
}

inline Eigen::MatrixXd matrix_from_lists(const Json& j, const char* field, bool lists_are_cols) {
  if (!j.is_array() || j.empty()) {
    throw ValidationError(std::string("field '") + field + "' must be a non-empty array");
  }
  const auto first = vec_from_json(j[0], field);
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m = lists_are_cols ? Eigen::MatrixXd(first.size(), n) : Eigen::MatrixXd(n, first.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto v = vec_from_json(j[static_cast<std::size_t>(k)], field);
    if (v.size() != first.size()) throw ValidationError(std::string("field '") + field + "' is ragged");
    if (lists_are_cols) m.col(k) = v; else m.row(k) = v.transpose();
  }
  return m;
}

inline const Json& require(const Json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) {
    throw ValidationError(std::string("missing field '") + field + "'");
  }
  return j.at(field);
}

inline void check_header(const Json& j, const char* kind) {
  const auto& v = require(j, "version");
  if (!v.is_number_integer() || v.get<int>() != kFormatVersion) {
    throw ValidationError("unsupported document version " + v.dump() + " (expected " +
                          std::to_string(kFormatVersion) + ")");
  }
  if (j.contains("kind") && j.at("kind") != kind) {
    throw ValidationError(std::string("expected a '") + kind + "' document, got " +
                          j.at("kind").dump());
  }
}

inline double number(const Json& j, const char* field) {
  const auto& v = require(j, field);
  if (!v.is_number()) throw ValidationError(std::string("field '") + field + "' must be numeric");
  return v.get<double>();
}

}  // namespace detail

inline Json to_json(const SubspaceModel& m) {
  return Json{{"version", kFormatVersion},
              {"kind", "subspace"},
              {"D", m.dim()},
              {"d", m.intrinsic_dim()},
              {"delta", m.delta},
              {"c", detail::to_json_vec(m.center)},
              {"lambdas", detail::to_json_vec(m.lambdas)},
              {"U1", detail::cols_to_json(m.basis)}};
}

inline SubspaceModel subspace_from_json(const Json& j) {
  detail::check_header(j, "subspace");
  SubspaceModel m;
  m.delta = detail::number(j, "delta");
  m.center = detail::vec_from_json(detail::require(j, "c"), "c");
  m.lambdas = detail::vec_from_json(detail::require(j, "lambdas"), "lambdas");
  m.basis = detail::matrix_from_lists(detail::require(j, "U1"), "U1", true);
  if (detail::number(j, "D") != static_cast<double>(m.dim()) ||
      detail::number(j, "d") != static_cast<double>(m.intrinsic_dim())) {
    throw ValidationError("subspace model: declared D/d disagree with array sizes");
  }
  m.validate();
  return m;
}

inline Json to_json(const MultiModel& mm) {
  Json models = Json::array();
  for (const auto& m : mm.models) models.push_back(to_json(m));
  return Json{{"version", kFormatVersion},
              {"kind", "multimodel"},
              {"K", mm.K()},
              {"centroids", detail::rows_to_json(mm.centroids)},
              {"models", models}};
}

inline MultiModel multimodel_from_json(const Json& j) {
  detail::check_header(j, "multimodel");
  MultiModel mm;
  mm.centroids = detail::matrix_from_lists(detail::require(j, "centroids"), "centroids", false);
  const auto& models = detail::require(j, "models");
  if (!models.is_array()) throw ValidationError("field 'models' must be an array");
  for (const auto& m : models) mm.models.push_back(subspace_from_json(m));
  if (detail::number(j, "K") != static_cast<double>(mm.K())) {
    throw ValidationError("multi model: declared K disagrees with member count");
  }
  mm.validate();
  return mm;
}

inline Json to_json(const Normalizer& n) {
  Json regimes = Json::array();
  for (const auto& r : n.regimes) {
    regimes.push_back(Json{{"mean", detail::to_json_vec(r.mean)},
                           {"std", detail::to_json_vec(r.stddev)},
                           {"masked", r.masked}});
  }
  return Json{{"version", kFormatVersion}, {"kind", "normalizer"}, {"regimes", regimes}};
}

inline Normalizer normalizer_from_json(const Json& j) {
  detail::check_header(j, "normalizer");
  Normalizer n;
  for (const auto& r : detail::require(j, "regimes")) {
    FeatureStats s;
    s.mean = detail::vec_from_json(detail::require(r, "mean"), "mean");
    s.stddev = detail::vec_from_json(detail::require(r, "std"), "std");
    s.masked = detail::require(r, "masked").get<std::vector<bool>>();
    if (s.stddev.size() != s.mean.size() || s.masked.size() != static_cast<std::size_t>(s.mean.size())) {
      throw ValidationError("normalizer: field sizes disagree");
    }
    for (Eigen::Index i = 0; i < s.stddev.size(); ++i) {
      if (!s.masked[static_cast<std::size_t>(i)] && !(s.stddev(i) > 0.0)) {
        throw ValidationError("normalizer: invariant std > 0 for unmasked features violated");
      }
    }
    n.regimes.push_back(std::move(s));
  }
  if (n.regimes.empty()) throw ValidationError("normalizer: no regimes");
  return n;
}

inline Json to_json(const DistanceScaler& s) {
  return Json{{"version", kFormatVersion}, {"kind", "scaler"}, {"floor", s.floor}, {"ceiling", s.ceiling}};
}

inline DistanceScaler scaler_from_json(const Json& j) {
  detail::check_header(j, "scaler");
  DistanceScaler s{detail::number(j, "floor"), detail::number(j, "ceiling")};
  s.validate();
  return s;
}

inline Json to_json(const HiRegressor& r) {
  Json w = Json::array();
  for (const auto& v : r.weights) w.push_back(detail::to_json_vec(v));
  return Json{{"version", kFormatVersion}, {"kind", "regressor"}, {"weights", w}};
}

inline HiRegressor regressor_from_json(const Json& j) {
  detail::check_header(j, "regressor");
  HiRegressor r;
  for (const auto& w : detail::require(j, "weights")) r.weights.push_back(detail::vec_from_json(w, "weights"));
  r.validate();
  return r;
}

}  // namespace subtrack

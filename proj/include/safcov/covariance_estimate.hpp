#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "safcov/matrix_toolkit.hpp"

namespace safcov {

enum class EstimatorId { Sample, EqualWeight, Saf, Lw, Kdm, Adz, St, Bt, Sim, Ff3f, Oracle };

std::string_view to_string(EstimatorId id);
/// Accepts the lower-case CLI names: sample, 1/n (or ew), saf, lw, kdm, adz, st, bt, sim, ff3f, oracle.
std::optional<EstimatorId> parse_estimator_id(std::string_view name);
const std::vector<EstimatorId>& all_estimator_ids();

/// A covariance estimate plus the numbers that produced it (mu, r, tau, seeds, ...).
/// `is_precision` marks estimators that deliver an inverse covariance directly (KDM).
struct CovarianceEstimate {
  SymMatrix matrix;
  bool is_precision = false;
  EstimatorId estimator_id = EstimatorId::Sample;
  std::map<std::string, double> params;
  bool positive_definite = false;
};

}  // namespace safcov

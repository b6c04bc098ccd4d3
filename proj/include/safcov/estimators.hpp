#pragma once

#include <cstdint>
#include <optional>

#include "safcov/covariance_estimate.hpp"
#include "safcov/model_selection.hpp"
#include "safcov/saf.hpp"

namespace safcov {

struct SafPipelineOptions {
  int r_max = 8;
  std::optional<int> r;     ///< skip factor-count selection
  std::optional<double> mu; ///< skip the information-criterion search
  MuSelectionOptions mu_options;
};

struct SafPipelineResult {
  CovarianceEstimate estimate;  ///< in the units of the input observations
  FactorFit fit;                ///< on the standardized panel
  int r = 1;
  std::optional<FactorCountResult> factor_count;
  std::optional<MuSelection> mu_selection;
};

/// Standardizes the observations, picks r (eigenvalue-difference count, at
/// least 1) and mu (information criterion) unless fixed, fits, and maps the
/// assembled covariance back to the original scale.
SafPipelineResult estimate_saf(const Matrix& obs, const SafPipelineOptions& options = {});

/// Side information an estimator may need for one window.
struct EstimatorContext {
  const Matrix* factors = nullptr;  ///< T x q observed factors (market first), aligned with obs
  const SymMatrix* truth = nullptr; ///< oracle only
  std::uint64_t seed = 0;
  SafPipelineOptions saf;
};

/// Runs one estimator on a T x N window. KDM returns a precision matrix
/// (is_precision set); 1/N returns the identity.
CovarianceEstimate run_estimator(EstimatorId id, const Matrix& obs, const EstimatorContext& ctx);

/// Covariance form of an estimate: precision outputs are inverted.
SymMatrix covariance_of(const CovarianceEstimate& e);

}  // namespace safcov

#pragma once

#include <optional>
#include <vector>

#include "safcov/covariance_estimate.hpp"
#include "safcov/matrix_toolkit.hpp"
#include "safcov/panel.hpp"

namespace safcov {

struct SafConfig {
  double mu = 0.0;            ///< l1 penalty on the loadings
  int r = 1;                  ///< number of factors
  double step_t = 0.01;       ///< projection depth of the soft-threshold gradient step
  int max_outer_iter = 20000;
  double conv_tol = 1e-6;
  double epsilon_ridge = 1e-4;  ///< added to diag(S_x) when N > T
  int warmup_iter = 100;        ///< unpenalized iterations used for the initial estimate
  /// After an accepted step the next depth is min(step_growth * t, max_step_t);
  /// step_growth = 1 keeps the depth fixed at step_t.
  double step_growth = 2.0;
  double max_step_t = 1.0;

  void validate() const;
};

/// Starting point for the penalized iterations.
struct WarmStart {
  Matrix loadings;
  Vector phi;
};

struct FactorFit {
  Matrix loadings;        ///< N x r, columns identified (see identify_loadings)
  Matrix factors;         ///< T x r GLS factors; zero columns for dropped loadings
  Vector phi_u;           ///< diagonal idiosyncratic variances from the ML step
  SymMatrix sigma_u_tau;  ///< thresholded residual covariance
  std::vector<double> objective_trace;
  bool converged = false;
  int n_iter = 0;
  int effective_r = 0;  ///< loading columns that are not identically zero
  double mu = 0.0;
  double tau = 0.0;
  double ridge = 0.0;  ///< epsilon actually added to diag(S_x)
  WarmStart state;     ///< final (Lambda, Phi) before identification, for path warm starts
};

/// log|det(L L' + Phi)| + tr(S_x (L L' + Phi)^{-1}).
double quasi_log_likelihood(const Matrix& loadings, const Vector& phi, const SymMatrix& s_x);

/// quasi_log_likelihood + mu * sum |lambda_ik|.
double penalized_objective(const Matrix& loadings, const Vector& phi, const SymMatrix& s_x,
                           double mu);

/// Tangent-plane majorizer of the likelihood at (loadings_m, phi_m), as a
/// function of the new loadings with Phi held at phi_m.
double majorized_likelihood(const Matrix& loadings, const Matrix& loadings_m,
                            const Vector& phi_m, const SymMatrix& s_x);

/// 2 [P - P S_x P] Lambda_m with P = (Lambda_m Lambda_m' + Phi_m)^{-1}.
Matrix majorization_gradient(const Matrix& loadings_m, const Vector& phi_m,
                             const SymMatrix& s_x);

/// Element-wise soft_threshold(Lambda_m - t A, t mu).
Matrix loading_update(const Matrix& loadings_m, const Matrix& gradient, double step_t, double mu);

/// diag[S_x - Lambda_new Lambda_m' (Lambda_m Lambda_m' + Phi_m)^{-1} S_x], floored at 1e-8.
Vector phi_update(const SymMatrix& s_x, const Matrix& loadings_new, const Matrix& loadings_m,
                  const Vector& phi_m);

inline constexpr double kPhiFloor = 1e-8;

/// S_x of a demeaned panel with the epsilon ridge applied when N > T.
SymMatrix saf_sample_covariance(const Matrix& obs, double epsilon_ridge, double* ridge_out = nullptr);

/// Principal-components start followed by cfg.warmup_iter unpenalized iterations.
WarmStart initial_estimate(const SymMatrix& s_x, const SafConfig& cfg);

/// Full estimator: penalized iterations, GLS factors and thresholded residual
/// covariance. The panel is expected to be demeaned and standardized.
FactorFit fit_saf(const ReturnPanel& panel, const SafConfig& cfg,
                  const WarmStart* warm_start = nullptr);

/// Orders columns by ascending count of zero entries (stable) and flips each
/// column so its first nonzero entry is nonnegative.
Matrix identify_loadings(const Matrix& loadings);

/// f_t = (L' Phi^{-1} L)^{-1} L' Phi^{-1} x_t for every row of a T x N panel.
Matrix gls_factors(const Matrix& obs, const Matrix& loadings, const Vector& phi);

/// 1/sqrt(N) + sqrt(log(N) / T).
double poet_threshold(Index n, Index t);

/// (1/T) U'U with its off-diagonal soft-thresholded at tau (default poet_threshold).
SymMatrix poet_residual_cov(const Matrix& residuals, std::optional<double> tau = std::nullopt);

/// Lambda S_F Lambda' + Sigma_u^tau in the units of the fitted panel.
CovarianceEstimate assemble_saf_covariance(const FactorFit& fit);

}  // namespace safcov

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "safcov/panel.hpp"
#include "safcov/saf.hpp"

namespace safcov {

struct FactorCountResult {
  int r_hat = 0;
  double xi = 0.0;        ///< calibrated eigengap threshold
  Vector eigengaps;       ///< pi_k - pi_{k+1}, k = 1..r_max
  Vector eigenvalues;     ///< all sample eigenvalues, descending
  int calibration_rounds = 0;
};

/// Edge-distribution threshold: twice the absolute OLS slope of
/// pi_j, ..., pi_{j+4} on (j-1)^{2/3}, ..., (j+3)^{2/3}; `j` is 1-based.
double eigengap_threshold(const Vector& eigenvalues, int j);

/// Largest r <= r_max with pi_r - pi_{r+1} > xi, or 0.
int count_factors_above(const Vector& eigenvalues, int r_max, double xi);

FactorCountResult select_num_factors_from_eigenvalues(const Vector& eigenvalues, int r_max,
                                                      std::optional<double> xi_override = {});

/// Eigenvalue-difference factor count on the panel's sample covariance.
FactorCountResult select_num_factors(const ReturnPanel& panel, int r_max,
                                     std::optional<double> xi_override = {});

/// 2 kappa sqrt(log N / N + log N / (N T)).
double ic_penalty(Index kappa, Index n, Index t);

/// log|det(L S_F L' + Sigma_u)| + tr(S_x (L S_F L' + Sigma_u)^{-1}).
double factor_model_likelihood(const Matrix& loadings, const SymMatrix& factor_cov,
                               const SymMatrix& sigma_u, const SymMatrix& s_x);

/// Number of nonzero loadings.
Index nonzero_count(const Matrix& loadings);

/// IC(mu) for a completed fit: the full likelihood at (L, S_F, Sigma_u^tau) plus ic_penalty.
double information_criterion(const FactorFit& fit, const SymMatrix& s_x, Index n, Index t);

struct MuSelectionOptions {
  int grid_size = 30;
  double grid_span = 1e-3;      ///< smallest grid point = mu_max * grid_span
  double mu_search_start = 0.05;
  int max_doublings = 40;
  bool path_warm_start = true;  ///< false: every grid point starts from the unpenalized fit
  /// With path warm starts, also fit from the unpenalized start and keep the
  /// fit with the lower penalized objective.
  bool multi_start = true;
  SafConfig base;               ///< r and mu are overwritten
};

struct MuSelection {
  std::vector<double> grid;
  std::vector<double> ic_values;
  std::vector<int> kappa_per_mu;
  std::vector<bool> excluded;  ///< failed or did not converge
  std::vector<std::string> warnings;
  double mu_max = 0.0;
  double mu_star = 0.0;
  std::size_t star_index = 0;
  bool degenerate = false;
  FactorFit best_fit;
};

/// Lays a log-spaced grid on (0, mu_max] and returns the IC minimiser
/// (ties go to the smallest mu). The panel must already be standardized.
MuSelection select_mu(const ReturnPanel& panel, int r, const MuSelectionOptions& options = {});
MuSelection select_mu(const ReturnPanel& panel, int r, int grid_size);

}  // namespace safcov

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "safcov/covariance_estimate.hpp"
#include "safcov/matrix_toolkit.hpp"

namespace safcov {

/// Observed factor series aligned with a panel's rows (T x q).
struct ObservedFactors {
  Matrix series;
  std::vector<std::string> labels;
};

struct ShrinkageDiagnostics {
  std::optional<double> alpha_star;            ///< LW weight on S_x, in [0, 1]
  std::optional<std::array<double, 3>> zeta;   ///< KDM
  std::optional<double> kappa;                 ///< ST
  std::optional<double> alpha_n;               ///< BT
  std::vector<double> cv_grid;                 ///< scalar candidates (ST, BT)
  std::vector<double> cv_scores;               ///< one score per candidate
};

// All functions below take a T x N matrix of observations; each demeans internally.

CovarianceEstimate sample_cov(const Matrix& obs);

/// Cross-sectional mean return per period, the market proxy used when no
/// observed market factor is available.
Vector market_proxy(const Matrix& obs);

/// One-factor regression covariance sigma_f^2 beta beta' + D with intercepts.
CovarianceEstimate sim_cov(const Matrix& obs, const Vector& market);

/// Three-factor regression covariance B' Sigma_F B + D with intercepts.
CovarianceEstimate ff3f_cov(const Matrix& obs, const Matrix& factors);

inline constexpr double kResidualVarianceFloor = 1e-8;

struct ShrinkageResult {
  CovarianceEstimate estimate;
  ShrinkageDiagnostics diagnostics;
};

/// alpha S_x + (1 - alpha) Sigma_SIM. Without an override alpha is the
/// plug-in optimal weight, clipped to [0, 1].
ShrinkageResult lw_shrinkage(const Matrix& obs, const Vector& market,
                             std::optional<double> alpha_override = std::nullopt);

/// The plug-in optimal weight on the single-index target (before clipping), times 1/T.
double lw_target_intensity(const Matrix& obs, const Vector& market);

struct KdmOptions {
  int folds = 5;
  int grid_steps = 10;  ///< simplex spacing 1 / grid_steps
  std::optional<std::array<double, 3>> zeta;
};

struct KdmResult {
  SymMatrix precision;
  std::array<double, 3> zeta{};
  std::vector<std::array<double, 3>> candidates;
  std::vector<double> cv_scores;
  bool positive_definite = false;
};

/// zeta_1 S_x^+ + zeta_2 I + zeta_3 Sigma_SIM^{-1}, zeta chosen on a simplex
/// grid by contiguous-fold cross-validation of out-of-sample GMVP variance.
KdmResult kdm_precision(const Matrix& obs, const Vector& market, const KdmOptions& options = {});

/// Out-of-sample GMVP variance of each candidate, averaged over contiguous folds.
std::vector<double> kdm_cv_scores(const Matrix& obs, const Vector& market, int folds,
                                  const std::vector<std::array<double, 3>>& candidates);

std::vector<std::array<double, 3>> simplex_grid(int steps);

/// Full-sample eigenvectors with eigenvalues diag(G_1' S_2 G_1) from a split
/// at row split_n. `swap_halves` uses the last T - split_n rows as the first block.
CovarianceEstimate adz_design_free(const Matrix& obs, Index split_n, bool swap_halves = false);

struct StOptions {
  int splits = 5;
  int grid_size = 40;
  std::uint64_t seed = 0;
  std::optional<double> kappa;
};

/// Soft-thresholds every off-diagonal entry of s at kappa; the diagonal is kept.
SymMatrix threshold_off_diagonal(const SymMatrix& s, double kappa);

ShrinkageResult st_threshold_cov(const Matrix& obs, const StOptions& options = {});

/// Mean squared Frobenius distance between the thresholded train-half covariance
/// and the validation-half covariance, per kappa, over seeded random half splits.
std::vector<double> st_cv_scores(const Matrix& obs, const std::vector<double>& kappas, int splits,
                                 std::uint64_t seed);

struct BtOptions {
  std::optional<double> alpha;
  int folds = 5;
  int grid_size = 8;
  double grid_span = 1e-2;
  int max_iter = 2000;
  int cv_max_iter = 300;
  double conv_tol = 1e-6;
  double epsilon_ridge = 1e-4;
};

struct BtFit {
  SymMatrix sigma;
  std::vector<double> objective_trace;
  bool converged = false;
  int n_iter = 0;
  double alpha = 0.0;
  double ridge = 0.0;
};

/// log det Sigma + tr(Sigma^{-1} S) + alpha sum_{i != j} |sigma_ij|; +inf when Sigma is not PD.
double bt_objective(const SymMatrix& sigma, const SymMatrix& s, double alpha);

/// Smallest alpha at which diag(S) satisfies the optimality conditions.
double bt_alpha_max(const SymMatrix& s);

/// Majorize-minimize fit started at S (ridged by epsilon when S is not PD).
BtFit bt_fit(const SymMatrix& s, double alpha, const BtOptions& options = {});

struct BtResult {
  CovarianceEstimate estimate;
  ShrinkageDiagnostics diagnostics;
  BtFit fit;
};

BtResult bt_sparse_cov(const Matrix& obs, const BtOptions& options = {});

/// Contiguous [begin, end) row blocks for K-fold splits.
std::vector<std::pair<Index, Index>> contiguous_folds(Index t, int folds);

/// Rows of obs outside [begin, end).
Matrix drop_rows(const Matrix& obs, Index begin, Index end);

}  // namespace safcov

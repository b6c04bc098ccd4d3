#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safcov/estimators.hpp"
#include "safcov/panel.hpp"

namespace safcov {

enum class DesignKind { Uniform, Sparse, Spiked };
enum class Distribution { Gaussian, StudentT5 };

/// Covariance: estimators see the raw panel and are scored against Sigma.
/// Correlation: estimators see the standardized panel and are scored against
/// the correlation matrix of Sigma (equal to Sigma for unit-diagonal designs).
enum class LossScale { Covariance, Correlation };

struct SimulationDesign {
  DesignKind kind = DesignKind::Uniform;
  Index n = 30;
  Index t = 60;
  double eta = 0.025;  ///< uniform and spiked designs
  double p = 0.1;      ///< sparse design
  std::uint64_t seed = 1;
};

std::string_view to_string(DesignKind kind);
DesignKind parse_design_kind(std::string_view name);

/// Independent 64-bit seed for stream `index` of a base seed (SplitMix64 mixing).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

/// Unit diagonal, off-diagonals eta * U(0, 1). Draws whose smallest eigenvalue
/// is <= 1e-6 are rejected and redrawn with the next seed.
SymMatrix gen_uniform_design(Index n, double eta, std::uint64_t seed);

/// Unit diagonal, each off-diagonal nonzero with probability p and then U(0, 0.2).
SymMatrix gen_sparse_design(Index n, double p, std::uint64_t seed);

struct FactorDesign {
  SymMatrix sigma;
  Matrix loadings;  ///< N x r
};

/// diag(N, N, N^0.8, N^0.5, 0, ..., 0) + uniform(eta) idiosyncratic part; the
/// loadings are sqrt(r_k) e_k.
FactorDesign gen_spiked_design(Index n, double eta, std::uint64_t seed);

/// Factor k loads on round(N^beta_k) randomly chosen series with U(0.5, 1.5)
/// magnitudes rescaled so the column's squared norm is N^beta_k; unit
/// idiosyncratic variance. beta = 1 gives a strong factor. The first column is
/// nonnegative (market-like); later columns get random signs.
FactorDesign gen_factor_design(Index n, const std::vector<double>& betas, std::uint64_t seed);

/// log pi_k(L'L) / log N for every k, descending.
Vector weak_factor_exponents(const Matrix& loadings);

std::string_view to_string(LossScale scale);
LossScale parse_loss_scale(std::string_view name);

/// D^{-1/2} Sigma D^{-1/2} with D = diag(Sigma).
SymMatrix correlation_of(const SymMatrix& sigma);

SymMatrix generate_design(const SimulationDesign& design, std::uint64_t seed);

/// T i.i.d. draws x_t = C z_t with C C' = Sigma. Student-t draws use a
/// chi-square(5) scale mixture rescaled to unit marginal variance.
ReturnPanel draw_panel(const SymMatrix& sigma, Index t, std::uint64_t seed,
                       Distribution dist = Distribution::Gaussian);

struct ReplicationScore {
  EstimatorId estimator = EstimatorId::Sample;
  int rep = 0;
  bool ok = false;
  double frobenius_loss = 0.0;  ///< ||Sigma_hat - Sigma||_F^2
  double spectral_loss = 0.0;   ///< ||Sigma_hat - Sigma||_2
  double weighted_loss = 0.0;   ///< weighted quadratic norm of the error
  double wall_time = 0.0;       ///< seconds
  std::string error;
};

struct EstimatorSummary {
  EstimatorId estimator = EstimatorId::Sample;
  int n_ok = 0;
  int n_failed = 0;
  double mean = 0.0;  ///< squared Frobenius loss
  double median = 0.0;
  double stderr_ = 0.0;
  double mean_spectral = 0.0;
  double mean_weighted = 0.0;
};

struct StudyConfig {
  SimulationDesign design;
  std::vector<EstimatorId> estimators;
  int reps = 100;
  Distribution dist = Distribution::Gaussian;
  bool redraw_sigma = false;  ///< new Sigma per replication instead of one per design
  LossScale scale = LossScale::Covariance;
  int jobs = 1;
  SafPipelineOptions saf;
};

struct StudyResult {
  SymMatrix sigma;  ///< the fixed true covariance (first replication's when redrawn)
  std::vector<ReplicationScore> scores;  ///< rep-major, estimator order as configured
  std::vector<EstimatorSummary> summary;
};

StudyResult run_study(const StudyConfig& config);

std::vector<EstimatorSummary> summarize(const std::vector<ReplicationScore>& scores,
                                        const std::vector<EstimatorId>& estimators);

}  // namespace safcov

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "safcov/estimators.hpp"
#include "safcov/panel.hpp"
#include "safcov/rivals.hpp"

namespace safcov {

/// Sigma^{-1} 1 / (1' Sigma^{-1} 1), renormalized to sum to one.
Vector gmvp_weights(const SymMatrix& sigma);
Vector gmvp_weights_from_precision(const SymMatrix& precision);
Vector gmvp_weights(const CovarianceEstimate& estimate);

struct MetricsConfig {
  int periods = 12;    ///< annualization factor
  double gamma = 1.0;  ///< risk aversion in the certainty equivalent
};

struct PerformanceMetrics {
  double sd = 0.0;  ///< sqrt(periods) * sigma_hat, sigma_hat^2 with divisor n - 1
  double av = 0.0;  ///< periods * mean
  double ce = 0.0;  ///< av - gamma / 2 * sd^2
  std::optional<double> sr;  ///< av / sd; missing when sd == 0
};

PerformanceMetrics performance_metrics(const std::vector<double>& returns,
                                       const MetricsConfig& cfg = {});

struct WeightSummary {
  double min = 0.0;
  double max = 0.0;
  double sd = 0.0;   ///< divisor n - 1 over all pooled weights
  double mad = 0.0;  ///< mean absolute deviation from the pooled mean
};

/// Pools every weight of every period.
WeightSummary weight_summary(const std::vector<Vector>& weights);

/// Annualized SD of returns[0..t] for t = start_index, ..., n - 1.
std::vector<double> expanding_sd_series(const std::vector<double>& returns, std::size_t start_index,
                                        int periods = 12);

struct BacktestConfig {
  Index window_h = 60;
  std::vector<Index> subset_sizes{30};
  int n_repeats = 100;
  std::uint64_t seed = 1;
  std::vector<EstimatorId> estimators{EstimatorId::EqualWeight, EstimatorId::Sample,
                                      EstimatorId::Saf};
  MetricsConfig metrics;
  int jobs = 1;
  SafPipelineOptions saf;
};

struct BacktestCell {
  EstimatorId estimator = EstimatorId::Sample;
  Index subset_size = 0;
  int repeat = 0;
  std::vector<Index> assets;
  std::vector<double> returns;  ///< length T - h when ok
  PerformanceMetrics metrics;
  WeightSummary weights;
  double max_abs_weight_sum_error = 0.0;
  bool ok = false;
  std::string error;
};

struct BacktestAggregate {
  EstimatorId estimator = EstimatorId::Sample;
  Index subset_size = 0;
  int n_ok = 0;
  int n_failed = 0;
  double sd = 0.0;
  double av = 0.0;
  double ce = 0.0;
  std::optional<double> sr;
  WeightSummary weights;
  std::vector<double> expanding_sd;  ///< mean over repeats of the expanding SD series
};

struct BacktestReport {
  std::vector<std::string> dates;  ///< dates of the T - h out-of-sample returns
  std::vector<BacktestCell> cells; ///< ordered by (size, repeat, estimator)
  std::vector<BacktestAggregate> aggregates;
  std::vector<std::string> log;
};

/// Asset columns for one (size, repeat): a seeded draw from `pool`, sorted.
std::vector<Index> draw_subset(const std::vector<Index>& pool, Index size, std::uint64_t seed,
                               int repeat);

/// Rolling-window GMVP backtest. Returns are raw (not standardized); when a
/// risk-free series is given it is subtracted per period to form excess returns.
BacktestReport run_backtest(const ReturnPanel& panel, const Vector* riskfree,
                            const ObservedFactors* factors, const BacktestConfig& cfg);

}  // namespace safcov

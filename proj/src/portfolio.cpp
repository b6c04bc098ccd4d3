#include "safcov/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "safcov/parallel.hpp"
#include "safcov/simulation.hpp"

namespace safcov {

namespace {

Vector normalized(const Vector& p1) {
  const double denom = p1.sum();
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw NumericalBreakdown("gmvp_weights: 1' Sigma^{-1} 1 is not positive");
  }
  Vector w = p1 / denom;
  return w / w.sum();
}

double sample_sd(const std::vector<double>& x, std::size_t count) {
  // shifted by x[0] so a constant series gives exactly zero
  const double shift = x[0];
  double mean = 0.0;
  for (std::size_t i = 0; i < count; ++i) mean += x[i] - shift;
  mean /= static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t i = 0; i < count; ++i) ss += (x[i] - shift - mean) * (x[i] - shift - mean);
  return std::sqrt(ss / static_cast<double>(count - 1));
}

}  // namespace

Vector gmvp_weights(const SymMatrix& sigma) {
  Eigen::LLT<Matrix> llt(sigma.mat());
  if (llt.info() != Eigen::Success || !is_positive_definite(sigma)) {
    throw NotPositiveDefinite("gmvp_weights: covariance is not PD");
  }
  return normalized(llt.solve(Vector::Ones(sigma.dim())));
}

Vector gmvp_weights_from_precision(const SymMatrix& precision) {
  return normalized(precision.mat() * Vector::Ones(precision.dim()));
}

Vector gmvp_weights(const CovarianceEstimate& estimate) {
  return estimate.is_precision ? gmvp_weights_from_precision(estimate.matrix)
                               : gmvp_weights(estimate.matrix);
}

PerformanceMetrics performance_metrics(const std::vector<double>& returns,
                                       const MetricsConfig& cfg) {
  const std::size_t n = returns.size();
  if (n < 2) throw InsufficientDimensions("performance_metrics: need at least two returns");
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(n);
  PerformanceMetrics m;
  m.av = cfg.periods * mean;
  m.sd = std::sqrt(static_cast<double>(cfg.periods)) * sample_sd(returns, n);
  m.ce = m.av - 0.5 * cfg.gamma * m.sd * m.sd;
  if (m.sd > 0.0) m.sr = m.av / m.sd;
  return m;
}

WeightSummary weight_summary(const std::vector<Vector>& weights) {
  std::vector<double> all;
  for (const auto& w : weights) all.insert(all.end(), w.data(), w.data() + w.size());
  if (all.empty()) throw InsufficientDimensions("weight_summary: no weights");
  WeightSummary s;
  s.min = *std::min_element(all.begin(), all.end());
  s.max = *std::max_element(all.begin(), all.end());
  const double n = static_cast<double>(all.size());
  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / n;
  double ss = 0.0, abs_dev = 0.0;
  for (double v : all) {
    ss += (v - mean) * (v - mean);
    abs_dev += std::abs(v - mean);
  }
  s.sd = all.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.mad = abs_dev / n;
  return s;
}

std::vector<double> expanding_sd_series(const std::vector<double>& returns, std::size_t start_index,
                                        int periods) {
  if (start_index < 2) throw InsufficientDimensions("expanding_sd_series: start_index must be >= 2");
  std::vector<double> out;
  const double scale = std::sqrt(static_cast<double>(periods));
  for (std::size_t t = start_index; t < returns.size(); ++t) {
    out.push_back(scale * sample_sd(returns, t + 1));
  }
  return out;
}

std::vector<Index> draw_subset(const std::vector<Index>& pool, Index size, std::uint64_t seed,
                               int repeat) {
  if (size < 1 || size > static_cast<Index>(pool.size())) {
    throw InsufficientDimensions("draw_subset: subset size " + std::to_string(size) +
                                 " exceeds the " + std::to_string(pool.size()) +
                                 " available assets");
  }
  std::mt19937_64 rng(stream_seed(stream_seed(seed, static_cast<std::uint64_t>(size)),
                                  static_cast<std::uint64_t>(repeat)));
  std::vector<Index> shuffled = pool;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  shuffled.resize(static_cast<std::size_t>(size));
  std::sort(shuffled.begin(), shuffled.end());
  return shuffled;
}

namespace {

struct CellJob {
  Index size;
  int repeat;
};

void run_cell(const Matrix& excess, const Matrix* factor_series, const BacktestConfig& cfg,
              const std::vector<Index>& assets, std::uint64_t cell_seed,
              std::vector<BacktestCell>& out) {
  const Index t_total = excess.rows();
  const Index h = cfg.window_h;
  Matrix sub(t_total, static_cast<Index>(assets.size()));
  for (std::size_t j = 0; j < assets.size(); ++j) sub.col(static_cast<Index>(j)) = excess.col(assets[j]);

  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    BacktestCell& cell = out[e];
    cell.assets = assets;
    std::vector<Vector> trajectory;
    try {
      for (Index t = h; t < t_total; ++t) {
        const Matrix window = sub.middleRows(t - h, h);
        Matrix fwin;
        EstimatorContext ctx;
        if (factor_series) {
          fwin = factor_series->middleRows(t - h, h);
          if (!fwin.allFinite()) throw DegenerateInput("factor data missing in window");
          ctx.factors = &fwin;
        }
        ctx.seed = stream_seed(cell_seed, static_cast<std::uint64_t>(t));
        ctx.saf = cfg.saf;
        const CovarianceEstimate est = run_estimator(cell.estimator, window, ctx);
        const Vector w = gmvp_weights(est);
        cell.max_abs_weight_sum_error = std::max(cell.max_abs_weight_sum_error, std::abs(w.sum() - 1.0));
        cell.returns.push_back(sub.row(t).dot(w));
        trajectory.push_back(w);
      }
      cell.metrics = performance_metrics(cell.returns, cfg.metrics);
      cell.weights = weight_summary(trajectory);
      cell.ok = true;
    } catch (const std::exception& ex) {
      cell.ok = false;
      cell.error = ex.what();
      cell.returns.clear();
    }
  }
}

}  // namespace

BacktestReport run_backtest(const ReturnPanel& panel, const Vector* riskfree,
                            const ObservedFactors* factors, const BacktestConfig& cfg) {
  const Index t_total = panel.n_periods();
  if (cfg.window_h < 2 || cfg.window_h >= t_total - 1) {
    throw InsufficientDimensions("run_backtest: window must satisfy 2 <= h < T - 1");
  }
  if (cfg.estimators.empty()) throw DegenerateInput("run_backtest: no estimators given");
  if (cfg.n_repeats < 1) throw DegenerateInput("run_backtest: repeats must be >= 1");
  Matrix excess = panel.obs;
  if (riskfree) {
    if (riskfree->size() != t_total) throw DegenerateInput("run_backtest: risk-free length mismatch");
    excess.colwise() -= *riskfree;
  }
  const Matrix* factor_series = nullptr;
  if (factors) {
    if (factors->series.rows() != t_total) throw DegenerateInput("run_backtest: factor length mismatch");
    factor_series = &factors->series;
  }

  BacktestReport report;
  std::vector<Index> pool;
  for (Index j = 0; j < excess.cols(); ++j) {
    if (excess.col(j).allFinite()) {
      pool.push_back(j);
    } else {
      report.log.push_back("asset " + (j < static_cast<Index>(panel.assets.size())
                                           ? panel.assets[static_cast<std::size_t>(j)]
                                           : std::to_string(j)) +
                           " has missing data and is excluded");
    }
  }
  for (Index t = cfg.window_h; t < t_total; ++t) {
    report.dates.push_back(t < static_cast<Index>(panel.dates.size())
                               ? panel.dates[static_cast<std::size_t>(t)]
                               : std::to_string(t));
  }

  std::vector<CellJob> jobs;
  for (Index size : cfg.subset_sizes) {
    for (int rep = 0; rep < cfg.n_repeats; ++rep) jobs.push_back({size, rep});
  }
  const std::size_t n_est = cfg.estimators.size();
  report.cells.resize(jobs.size() * n_est);
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (std::size_t e = 0; e < n_est; ++e) {
      BacktestCell& c = report.cells[j * n_est + e];
      c.estimator = cfg.estimators[e];
      c.subset_size = jobs[j].size;
      c.repeat = jobs[j].repeat;
    }
  }
  // Subsets are drawn up front so a bad size fails before any fitting.
  std::vector<std::vector<Index>> subsets;
  for (const auto& job : jobs) subsets.push_back(draw_subset(pool, job.size, cfg.seed, job.repeat));

  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t j) {
    std::vector<BacktestCell> cells(report.cells.begin() + static_cast<std::ptrdiff_t>(j * n_est),
                                    report.cells.begin() + static_cast<std::ptrdiff_t>((j + 1) * n_est));
    const std::uint64_t cell_seed =
        stream_seed(stream_seed(cfg.seed, static_cast<std::uint64_t>(jobs[j].size)),
                    static_cast<std::uint64_t>(jobs[j].repeat) + 0x51ed);
    run_cell(excess, factor_series, cfg, subsets[j], cell_seed, cells);
    std::move(cells.begin(), cells.end(), report.cells.begin() + static_cast<std::ptrdiff_t>(j * n_est));
  });

  const std::size_t start = std::min<std::size_t>(report.dates.size() - 1, 2);
  for (Index size : cfg.subset_sizes) {
    for (EstimatorId id : cfg.estimators) {
      BacktestAggregate agg;
      agg.estimator = id;
      agg.subset_size = size;
      int n_sr = 0;
      double sr_sum = 0.0;
      for (const auto& c : report.cells) {
        if (c.estimator != id || c.subset_size != size) continue;
        if (!c.ok) {
          ++agg.n_failed;
          report.log.push_back(std::string(to_string(id)) + " size " + std::to_string(size) +
                               " repeat " + std::to_string(c.repeat) + ": " + c.error);
          continue;
        }
        ++agg.n_ok;
        agg.sd += c.metrics.sd;
        agg.av += c.metrics.av;
        agg.ce += c.metrics.ce;
        if (c.metrics.sr) {
          sr_sum += *c.metrics.sr;
          ++n_sr;
        }
        agg.weights.min += c.weights.min;
        agg.weights.max += c.weights.max;
        agg.weights.sd += c.weights.sd;
        agg.weights.mad += c.weights.mad;
        const auto series = expanding_sd_series(c.returns, start, cfg.metrics.periods);
        if (agg.expanding_sd.empty()) agg.expanding_sd.assign(series.size(), 0.0);
        for (std::size_t i = 0; i < series.size(); ++i) agg.expanding_sd[i] += series[i];
      }
      if (agg.n_ok > 0) {
        const double k = agg.n_ok;
        agg.sd /= k;
        agg.av /= k;
        agg.ce /= k;
        agg.weights.min /= k;
        agg.weights.max /= k;
        agg.weights.sd /= k;
        agg.weights.mad /= k;
        for (double& v : agg.expanding_sd) v /= k;
      }
      if (n_sr > 0) agg.sr = sr_sum / n_sr;
      report.aggregates.push_back(agg);
    }
  }
  return report;
}

}  // namespace safcov

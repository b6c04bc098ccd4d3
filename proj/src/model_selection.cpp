#include "safcov/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace safcov {

double eigengap_threshold(const Vector& eigenvalues, int j) {
  constexpr int kWindow = 5;
  if (j < 1 || j - 1 + kWindow > eigenvalues.size()) {
    throw InsufficientDimensions("eigengap_threshold: need eigenvalues up to index " +
                                 std::to_string(j + kWindow - 1));
  }
  double sx = 0.0, sy = 0.0;
  double xs[kWindow], ys[kWindow];
  for (int k = 0; k < kWindow; ++k) {
    xs[k] = std::pow(static_cast<double>(j - 1 + k), 2.0 / 3.0);
    ys[k] = eigenvalues(j - 1 + k);
    sx += xs[k];
    sy += ys[k];
  }
  const double mx = sx / kWindow, my = sy / kWindow;
  double sxy = 0.0, sxx = 0.0;
  for (int k = 0; k < kWindow; ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  return 2.0 * std::abs(sxy / sxx);
}

int count_factors_above(const Vector& eigenvalues, int r_max, double xi) {
  for (int r = r_max; r >= 1; --r) {
    if (eigenvalues(r - 1) - eigenvalues(r) > xi) return r;
  }
  return 0;
}

FactorCountResult select_num_factors_from_eigenvalues(const Vector& eigenvalues, int r_max,
                                                      std::optional<double> xi_override) {
  if (r_max < 1) throw InsufficientDimensions("select_num_factors: r_max must be >= 1");
  if (eigenvalues.size() < r_max + 5) {
    throw InsufficientDimensions("select_num_factors: need at least r_max + 5 eigenvalues");
  }
  FactorCountResult out;
  out.eigenvalues = eigenvalues;
  out.eigengaps.resize(r_max);
  for (int k = 0; k < r_max; ++k) out.eigengaps(k) = eigenvalues(k) - eigenvalues(k + 1);

  if (xi_override) {
    out.xi = *xi_override;
    out.r_hat = count_factors_above(eigenvalues, r_max, out.xi);
    return out;
  }
  int j = r_max + 1;
  for (int round = 1; round <= 10; ++round) {
    out.calibration_rounds = round;
    out.xi = eigengap_threshold(eigenvalues, j);
    out.r_hat = count_factors_above(eigenvalues, r_max, out.xi);
    if (out.r_hat + 1 == j) break;
    j = out.r_hat + 1;
  }
  return out;
}

FactorCountResult select_num_factors(const ReturnPanel& panel, int r_max,
                                     std::optional<double> xi_override) {
  const Index limit = std::min(panel.n_assets(), panel.n_periods());
  if (r_max + 6 > limit) {
    throw InsufficientDimensions("select_num_factors: r_max + 6 = " + std::to_string(r_max + 6) +
                                 " exceeds min(N, T) = " + std::to_string(limit));
  }
  const Vector ev = sym_eigenvalues(sample_covariance(panel.obs));
  return select_num_factors_from_eigenvalues(ev, r_max, xi_override);
}

double ic_penalty(Index kappa, Index n, Index t) {
  const double nn = static_cast<double>(n);
  const double log_n = std::log(nn);
  return 2.0 * static_cast<double>(kappa) *
         std::sqrt(log_n / nn + log_n / (nn * static_cast<double>(t)));
}

double factor_model_likelihood(const Matrix& loadings, const SymMatrix& factor_cov,
                               const SymMatrix& sigma_u, const SymMatrix& s_x) {
  const SymMatrix sigma(loadings * factor_cov.mat() * loadings.transpose() + sigma_u.mat());
  Eigen::LLT<Matrix> llt(sigma.mat());
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("factor_model_likelihood: implied covariance is not PD");
  }
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Matrix solved = llt.solve(s_x.mat());
  return log_det + solved.trace();
}

Index nonzero_count(const Matrix& loadings) { return (loadings.array() != 0.0).count(); }

double information_criterion(const FactorFit& fit, const SymMatrix& s_x, Index n, Index t) {
  const SymMatrix s_f = sample_covariance(fit.factors);
  return factor_model_likelihood(fit.loadings, s_f, fit.sigma_u_tau, s_x) +
         ic_penalty(nonzero_count(fit.loadings), n, t);
}

namespace {

bool all_zero(const FactorFit& fit) { return nonzero_count(fit.loadings) == 0; }

double final_objective(const FactorFit& fit) {
  return fit.objective_trace.empty() ? std::numeric_limits<double>::infinity()
                                     : fit.objective_trace.back();
}

}  // namespace

MuSelection select_mu(const ReturnPanel& panel, int r, int grid_size) {
  MuSelectionOptions options;
  options.grid_size = grid_size;
  return select_mu(panel, r, options);
}

MuSelection select_mu(const ReturnPanel& panel, int r, const MuSelectionOptions& options) {
  if (options.grid_size < 1) throw DegenerateInput("select_mu: grid_size must be >= 1");
  SafConfig cfg = options.base;
  cfg.r = r;
  cfg.mu = 0.0;
  cfg.validate();
  const Index n = panel.n_assets();
  const Index t = panel.n_periods();
  require_nondegenerate_columns(panel.obs, "select_mu");
  const SymMatrix s_x = saf_sample_covariance(demeaned(panel.obs), cfg.epsilon_ridge);
  const WarmStart init = initial_estimate(s_x, cfg);

  auto fit_at = [&](double mu, const WarmStart& warm) {
    SafConfig c = cfg;
    c.mu = mu;
    return fit_saf(panel, c, &warm);
  };

  MuSelection sel;
  // mu_max: smallest power-of-two multiple of the start value that zeroes every loading.
  double mu = options.mu_search_start;
  if (all_zero(fit_at(mu, init))) {
    for (int k = 0; k < options.max_doublings; ++k) {
      const double lower = 0.5 * mu;
      if (!all_zero(fit_at(lower, init))) break;
      mu = lower;
    }
  } else {
    bool found = false;
    for (int k = 0; k < options.max_doublings; ++k) {
      mu *= 2.0;
      if (all_zero(fit_at(mu, init))) {
        found = true;
        break;
      }
    }
    if (!found) throw NonConvergence("select_mu: no penalty zeroes the loadings");
  }
  sel.mu_max = mu;

  const int g = options.grid_size;
  if (g == 1) {
    sel.grid = {sel.mu_max};
    sel.degenerate = true;
  } else {
    for (int k = 0; k < g; ++k) {
      const double frac = static_cast<double>(g - 1 - k) / static_cast<double>(g - 1);
      sel.grid.push_back(sel.mu_max * std::pow(options.grid_span, frac));
    }
    sel.grid.back() = sel.mu_max;
  }

  sel.ic_values.assign(sel.grid.size(), std::numeric_limits<double>::quiet_NaN());
  sel.kappa_per_mu.assign(sel.grid.size(), -1);
  sel.excluded.assign(sel.grid.size(), true);
  std::vector<bool> produced(sel.grid.size(), false);
  std::vector<FactorFit> fits(sel.grid.size());

  WarmStart warm = init;
  for (std::size_t k = 0; k < sel.grid.size(); ++k) {
    try {
      FactorFit fit = fit_at(sel.grid[k], options.path_warm_start ? warm : init);
      if (options.path_warm_start && options.multi_start) {
        FactorFit alt = fit_at(sel.grid[k], init);
        if (final_objective(alt) < final_objective(fit)) fit = std::move(alt);
      }
      sel.ic_values[k] = information_criterion(fit, s_x, n, t);
      sel.kappa_per_mu[k] = static_cast<int>(nonzero_count(fit.loadings));
      produced[k] = true;
      sel.excluded[k] = !fit.converged;
      if (!fit.converged) {
        sel.warnings.push_back("mu=" + std::to_string(sel.grid[k]) + " did not converge");
      }
      if (options.path_warm_start) warm = fit.state;
      fits[k] = std::move(fit);
    } catch (const Error& e) {
      sel.warnings.push_back("mu=" + std::to_string(sel.grid[k]) + " failed: " + e.what());
    }
  }

  auto pick = [&](bool require_converged) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < sel.grid.size(); ++k) {
      if (!produced[k] || (require_converged && sel.excluded[k])) continue;
      if (!best || sel.ic_values[k] < sel.ic_values[*best]) best = k;
    }
    return best;
  };
  std::optional<std::size_t> best = pick(true);
  if (!best) {
    best = pick(false);
    if (!best) throw NonConvergence("select_mu: every grid point failed");
    sel.warnings.push_back("no grid point converged; using non-converged fits");
  }
  sel.star_index = *best;
  sel.mu_star = sel.grid[*best];
  sel.best_fit = std::move(fits[*best]);
  return sel;
}

}  // namespace safcov

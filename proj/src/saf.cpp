#include "safcov/saf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace safcov {

void SafConfig::validate() const {
  if (!(mu >= 0.0)) throw DegenerateInput("SafConfig: mu must be >= 0");
  if (r < 1) throw DegenerateInput("SafConfig: r must be >= 1");
  if (!(step_t > 0.0)) throw DegenerateInput("SafConfig: step_t must be > 0");
  if (!(conv_tol > 0.0)) throw DegenerateInput("SafConfig: conv_tol must be > 0");
  if (max_outer_iter < 1) throw DegenerateInput("SafConfig: max_outer_iter must be >= 1");
  if (!(epsilon_ridge >= 0.0)) throw DegenerateInput("SafConfig: epsilon_ridge must be >= 0");
  if (warmup_iter < 0) throw DegenerateInput("SafConfig: warmup_iter must be >= 0");
  if (!(step_growth >= 1.0)) throw DegenerateInput("SafConfig: step_growth must be >= 1");
  if (!(max_step_t >= step_t)) throw DegenerateInput("SafConfig: max_step_t must be >= step_t");
}

namespace {

double trace_product(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

Matrix gradient_with_precision(const Matrix& loadings_m, const SymMatrix& precision,
                               const SymMatrix& s_x) {
  const Matrix pl = precision.mat() * loadings_m;       // P L
  const Matrix spl = s_x.mat() * pl;                    // S P L
  return 2.0 * (pl - precision.mat() * spl);
}

Vector phi_update_with_precision(const SymMatrix& s_x, const Matrix& loadings_new,
                                 const Matrix& loadings_m, const SymMatrix& precision) {
  // B = L_m' P S  (r x N); diag(L_new B)_i = sum_k L_new(i,k) B(k,i)
  const Matrix b = (precision.mat() * loadings_m).transpose() * s_x.mat();
  Vector out = s_x.diag();
  for (Index i = 0; i < out.size(); ++i) {
    out(i) -= loadings_new.row(i).dot(b.col(i));
    if (!(out(i) > kPhiFloor)) out(i) = kPhiFloor;
  }
  return out;
}

// EM diagonal step with the loadings held: beta = L' P, C = I - beta L + beta S beta',
// Phi = diag(S - 2 L beta S + L C L').
Vector phi_em_step(const SymMatrix& s_x, const Matrix& loadings, const SymMatrix& precision) {
  const Matrix beta = loadings.transpose() * precision.mat();
  const Matrix beta_s = beta * s_x.mat();
  const Matrix c = Matrix::Identity(loadings.cols(), loadings.cols()) - beta * loadings +
                   beta_s * beta.transpose();
  const Matrix lc = loadings * c;
  Vector out = s_x.diag();
  for (Index i = 0; i < out.size(); ++i) {
    out(i) += -2.0 * loadings.row(i).dot(beta_s.col(i)) + lc.row(i).dot(loadings.row(i));
    if (!(out(i) > kPhiFloor)) out(i) = kPhiFloor;
  }
  return out;
}

struct Evaluation {
  double objective = std::numeric_limits<double>::infinity();
  SymMatrix precision;
};

// Penalized objective plus the precision it was computed from; infinite
// objective when the candidate is not a valid (PD) parameter point.
Evaluation evaluate(const Matrix& loadings, const Vector& phi, const SymMatrix& s_x, double mu) {
  Evaluation ev;
  try {
    ev.precision = woodbury_precision_diag(loadings, phi);
    const double v = log_det_low_rank_diag(loadings, phi) +
                     trace_product(s_x.mat(), ev.precision.mat()) +
                     mu * loadings.cwiseAbs().sum();
    if (std::isfinite(v)) ev.objective = v;
  } catch (const Error&) {
  }
  return ev;
}

struct MmOutcome {
  bool converged = false;
  int iterations = 0;
};

constexpr int kMaxStepHalvings = 40;

// Alternates the soft-threshold loading step and the EM diagonal step. A step
// is accepted only when the penalized objective does not increase; otherwise
// the projection depth is halved for that iteration. Near some limit points
// the coupled diagonal step is an ascent direction at every depth, so each
// depth also tries the loading step with phi held, followed by an EM diagonal
// step at the new loadings when that step descends.
MmOutcome run_mm(const SymMatrix& s_x, Matrix& loadings, Vector& phi, double mu,
                 const SafConfig& cfg, int max_iter, std::vector<double>* trace) {
  MmOutcome out;
  Evaluation current = evaluate(loadings, phi, s_x, mu);
  if (!std::isfinite(current.objective)) {
    throw NotPositiveDefinite("fit_saf: starting point is not a valid parameter");
  }
  if (trace) trace->push_back(current.objective);
  double t = cfg.step_t;
  for (int m = 1; m <= max_iter; ++m) {
    const Matrix grad = gradient_with_precision(loadings, current.precision, s_x);
    bool accepted = false;
    Matrix next_l;
    Vector next_phi;
    Evaluation next;
    for (int k = 0; k <= kMaxStepHalvings; ++k) {
      next_l = loading_update(loadings, grad, t, mu);
      next_phi = phi_update_with_precision(s_x, next_l, loadings, current.precision);
      next = evaluate(next_l, next_phi, s_x, mu);
      if (next.objective <= current.objective) {
        accepted = true;
        break;
      }
      next = evaluate(next_l, phi, s_x, mu);
      if (next.objective <= current.objective) {
        accepted = true;
        next_phi = phi;
        const Vector refreshed = phi_em_step(s_x, next_l, next.precision);
        Evaluation alt = evaluate(next_l, refreshed, s_x, mu);
        if (alt.objective <= next.objective) {
          next_phi = refreshed;
          next = std::move(alt);
        }
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No descent at any admissible depth: stationary to working precision.
      out.converged = true;
      break;
    }
    out.iterations = m;
    const double d_l = spectral_norm(Matrix(next_l - loadings));
    const double d_phi = (next_phi - phi).cwiseAbs().maxCoeff();
    loadings = std::move(next_l);
    phi = std::move(next_phi);
    current = std::move(next);
    if (trace) trace->push_back(current.objective);
    if (d_l < cfg.conv_tol && d_phi < cfg.conv_tol) {
      out.converged = true;
      break;
    }
    t = std::max(cfg.step_t, std::min(cfg.step_growth * t, cfg.max_step_t));
  }
  return out;
}

}  // namespace

double quasi_log_likelihood(const Matrix& loadings, const Vector& phi, const SymMatrix& s_x) {
  if ((phi.array() <= 0.0).any()) {
    throw NotPositiveDefinite("quasi_log_likelihood: phi entries must be positive");
  }
  const double log_det = log_det_low_rank_diag(loadings, phi);
  const SymMatrix precision = woodbury_precision_diag(loadings, phi);
  return log_det + trace_product(s_x.mat(), precision.mat());
}

double penalized_objective(const Matrix& loadings, const Vector& phi, const SymMatrix& s_x,
                           double mu) {
  return quasi_log_likelihood(loadings, phi, s_x) + mu * loadings.cwiseAbs().sum();
}

double majorized_likelihood(const Matrix& loadings, const Matrix& loadings_m,
                            const Vector& phi_m, const SymMatrix& s_x) {
  const double log_det_m = log_det_low_rank_diag(loadings_m, phi_m);
  const SymMatrix precision_m = woodbury_precision_diag(loadings_m, phi_m);
  const Matrix tangent = 2.0 * loadings_m.transpose() * precision_m.mat() * (loadings - loadings_m);
  const SymMatrix precision_new = woodbury_precision_diag(loadings, phi_m);
  return log_det_m + tangent.trace() + trace_product(s_x.mat(), precision_new.mat());
}

Matrix majorization_gradient(const Matrix& loadings_m, const Vector& phi_m,
                             const SymMatrix& s_x) {
  return gradient_with_precision(loadings_m, woodbury_precision_diag(loadings_m, phi_m), s_x);
}

Matrix loading_update(const Matrix& loadings_m, const Matrix& gradient, double step_t,
                      double mu) {
  const double threshold = step_t * mu;
  return (loadings_m - step_t * gradient).unaryExpr([threshold](double v) {
    return soft_threshold(v, threshold);
  });
}

Vector phi_update(const SymMatrix& s_x, const Matrix& loadings_new, const Matrix& loadings_m,
                  const Vector& phi_m) {
  return phi_update_with_precision(s_x, loadings_new, loadings_m,
                                   woodbury_precision_diag(loadings_m, phi_m));
}

SymMatrix saf_sample_covariance(const Matrix& obs, double epsilon_ridge, double* ridge_out) {
  SymMatrix s = sample_covariance(obs);
  double ridge = 0.0;
  if (obs.cols() > obs.rows() && epsilon_ridge > 0.0) {
    ridge = epsilon_ridge;
    s = SymMatrix(s.mat() + ridge * Matrix::Identity(s.dim(), s.dim()));
  }
  if (ridge_out) *ridge_out = ridge;
  return s;
}

WarmStart initial_estimate(const SymMatrix& s_x, const SafConfig& cfg) {
  cfg.validate();
  const Index n = s_x.dim();
  if (cfg.r > n) {
    throw InsufficientDimensions("initial_estimate: r = " + std::to_string(cfg.r) +
                                 " exceeds N = " + std::to_string(n));
  }
  const EigenPair ep = sym_eigen(s_x);
  WarmStart ws;
  ws.loadings = ep.vectors.leftCols(cfg.r) *
                ep.values.head(cfg.r).cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Vector common = ws.loadings.rowwise().squaredNorm();
  ws.phi = (s_x.diag() - common).cwiseMax(0.05 * s_x.diag()).cwiseMax(kPhiFloor);
  if (cfg.warmup_iter > 0) {
    run_mm(s_x, ws.loadings, ws.phi, 0.0, cfg, cfg.warmup_iter, nullptr);
  }
  return ws;
}

Matrix identify_loadings(const Matrix& loadings) {
  const Index r = loadings.cols();
  std::vector<Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<Index> zeros(static_cast<std::size_t>(r));
  for (Index k = 0; k < r; ++k) {
    zeros[static_cast<std::size_t>(k)] = (loadings.col(k).array() == 0.0).count();
  }
  std::stable_sort(order.begin(), order.end(), [&zeros](Index a, Index b) {
    return zeros[static_cast<std::size_t>(a)] < zeros[static_cast<std::size_t>(b)];
  });
  Matrix out(loadings.rows(), r);
  for (Index k = 0; k < r; ++k) {
    out.col(k) = loadings.col(order[static_cast<std::size_t>(k)]);
    for (Index i = 0; i < out.rows(); ++i) {
      if (out(i, k) != 0.0) {
        if (out(i, k) < 0.0) out.col(k) = -out.col(k);
        break;
      }
    }
  }
  return out;
}

Matrix gls_factors(const Matrix& obs, const Matrix& loadings, const Vector& phi) {
  if ((phi.array() <= 0.0).any()) {
    throw NotPositiveDefinite("gls_factors: phi entries must be positive");
  }
  const Matrix w = phi.cwiseInverse().asDiagonal() * loadings;  // Phi^{-1} L
  Matrix inner = loadings.transpose() * w;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::LLT<Matrix> llt(inner);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all()) {
    throw SingularInnerSystem("gls_factors: L' Phi^{-1} L is singular; reduce r");
  }
  // F' = (L' Phi^-1 L)^{-1} L' Phi^-1 X'
  return llt.solve(w.transpose() * obs.transpose()).transpose();
}

double poet_threshold(Index n, Index t) {
  const double nn = static_cast<double>(n);
  return 1.0 / std::sqrt(nn) + std::sqrt(std::log(nn) / static_cast<double>(t));
}

SymMatrix poet_residual_cov(const Matrix& residuals, std::optional<double> tau) {
  const Index t = residuals.rows();
  const Index n = residuals.cols();
  if (t < 2) throw InsufficientDimensions("poet_residual_cov: need T >= 2");
  const double thr = tau.value_or(poet_threshold(n, t));
  Matrix s = (residuals.transpose() * residuals) / static_cast<double>(t);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (i != j) s(i, j) = soft_threshold(s(i, j), thr);
    }
  }
  return SymMatrix(s);
}

FactorFit fit_saf(const ReturnPanel& panel, const SafConfig& cfg, const WarmStart* warm_start) {
  cfg.validate();
  const Index t = panel.n_periods();
  const Index n = panel.n_assets();
  if (t < cfg.r + 2) {
    throw InsufficientDimensions("fit_saf: need T >= r + 2, got T = " + std::to_string(t) +
                                 ", r = " + std::to_string(cfg.r));
  }
  if (cfg.r > n) throw InsufficientDimensions("fit_saf: r exceeds N");
  require_nondegenerate_columns(panel.obs, "fit_saf");
  const Matrix x = demeaned(panel.obs);

  FactorFit fit;
  fit.mu = cfg.mu;
  const SymMatrix s_x = saf_sample_covariance(x, cfg.epsilon_ridge, &fit.ridge);

  WarmStart state;
  if (warm_start) {
    if (warm_start->loadings.rows() != n || warm_start->loadings.cols() != cfg.r ||
        warm_start->phi.size() != n) {
      throw DegenerateInput("fit_saf: warm start has the wrong shape");
    }
    state = *warm_start;
  } else {
    state = initial_estimate(s_x, cfg);
  }

  const MmOutcome mm =
      run_mm(s_x, state.loadings, state.phi, cfg.mu, cfg, cfg.max_outer_iter, &fit.objective_trace);
  fit.converged = mm.converged;
  fit.n_iter = mm.iterations;
  fit.state = state;
  fit.phi_u = state.phi;
  fit.loadings = identify_loadings(state.loadings);

  std::vector<Index> active;
  for (Index k = 0; k < fit.loadings.cols(); ++k) {
    if ((fit.loadings.col(k).array() != 0.0).any()) active.push_back(k);
  }
  fit.effective_r = static_cast<int>(active.size());
  fit.factors = Matrix::Zero(t, cfg.r);
  if (!active.empty()) {
    Matrix l_active(n, static_cast<Index>(active.size()));
    for (std::size_t c = 0; c < active.size(); ++c) {
      l_active.col(static_cast<Index>(c)) = fit.loadings.col(active[c]);
    }
    const Matrix f_active = gls_factors(x, l_active, fit.phi_u);
    for (std::size_t c = 0; c < active.size(); ++c) {
      fit.factors.col(active[c]) = f_active.col(static_cast<Index>(c));
    }
  }
  const Matrix residuals = x - fit.factors * fit.loadings.transpose();
  fit.tau = poet_threshold(n, t);
  fit.sigma_u_tau = poet_residual_cov(residuals, fit.tau);
  return fit;
}

CovarianceEstimate assemble_saf_covariance(const FactorFit& fit) {
  if (fit.factors.rows() <= fit.loadings.cols()) {
    throw InsufficientDimensions("assemble_saf_covariance: need more periods than factors");
  }
  const SymMatrix s_f = sample_covariance(fit.factors);
  CovarianceEstimate est;
  est.matrix = SymMatrix(fit.loadings * s_f.mat() * fit.loadings.transpose() +
                         fit.sigma_u_tau.mat());
  est.estimator_id = EstimatorId::Saf;
  est.params["mu"] = fit.mu;
  est.params["r"] = static_cast<double>(fit.loadings.cols());
  est.params["effective_r"] = static_cast<double>(fit.effective_r);
  est.params["tau"] = fit.tau;
  est.params["converged"] = fit.converged ? 1.0 : 0.0;
  est.params["n_iter"] = static_cast<double>(fit.n_iter);
  if (!is_positive_definite(est.matrix)) {
    throw NotPositiveDefinite("assemble_saf_covariance: estimate is not positive definite");
  }
  est.positive_definite = true;
  return est;
}

}  // namespace safcov

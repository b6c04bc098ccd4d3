#include "safcov/rivals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace safcov {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CovarianceEstimate make_estimate(SymMatrix m, EstimatorId id) {
  CovarianceEstimate e;
  e.positive_definite = is_positive_definite(m);
  e.matrix = std::move(m);
  e.estimator_id = id;
  return e;
}

void require_rows(const Matrix& obs, Index min_rows, const char* context) {
  if (obs.rows() < min_rows || obs.cols() < 1) {
    throw InsufficientDimensions(std::string(context) + ": need at least " +
                                 std::to_string(min_rows) + " observations");
  }
}

Vector centered(const Vector& v) { return v.array() - v.mean(); }

}  // namespace

std::vector<std::pair<Index, Index>> contiguous_folds(Index t, int folds) {
  if (folds < 2 || t < folds) throw InsufficientDimensions("contiguous_folds: too few rows");
  std::vector<std::pair<Index, Index>> out;
  for (int k = 0; k < folds; ++k) {
    out.emplace_back(t * k / folds, t * (k + 1) / folds);
  }
  return out;
}

Matrix drop_rows(const Matrix& obs, Index begin, Index end) {
  Matrix out(obs.rows() - (end - begin), obs.cols());
  out.topRows(begin) = obs.topRows(begin);
  out.bottomRows(obs.rows() - end) = obs.bottomRows(obs.rows() - end);
  return out;
}

CovarianceEstimate sample_cov(const Matrix& obs) {
  require_rows(obs, 2, "sample_cov");
  return make_estimate(sample_covariance(obs), EstimatorId::Sample);
}

Vector market_proxy(const Matrix& obs) { return obs.rowwise().mean(); }

CovarianceEstimate sim_cov(const Matrix& obs, const Vector& market) {
  require_rows(obs, 3, "sim_cov");
  if (market.size() != obs.rows()) throw DegenerateInput("sim_cov: market length mismatch");
  const Matrix x = demeaned(obs);
  const Vector f = centered(market);
  const double t = static_cast<double>(obs.rows());
  const double var_f = f.squaredNorm() / t;
  if (!(var_f > 0.0)) throw DegenerateInput("sim_cov: market factor has zero variance");
  const Vector beta = x.transpose() * f / (t * var_f);
  Vector d = x.colwise().squaredNorm().transpose() / t - beta.cwiseAbs2() * var_f;
  d = d.cwiseMax(kResidualVarianceFloor);
  Matrix m = var_f * beta * beta.transpose();
  m.diagonal() += d;
  auto e = make_estimate(SymMatrix(m), EstimatorId::Sim);
  e.params["var_market"] = var_f;
  return e;
}

CovarianceEstimate ff3f_cov(const Matrix& obs, const Matrix& factors) {
  require_rows(obs, 5, "ff3f_cov");
  if (factors.rows() != obs.rows() || factors.cols() != 3) {
    throw DegenerateInput("ff3f_cov: expected a T x 3 factor matrix aligned with the panel");
  }
  const Matrix x = demeaned(obs);
  const Matrix f = demeaned(factors);
  const double t = static_cast<double>(obs.rows());
  Eigen::ColPivHouseholderQR<Matrix> qr(f);
  if (qr.rank() < 3) throw DegenerateInput("ff3f_cov: factors are collinear");
  const Matrix beta = qr.solve(x);  // 3 x N
  const Matrix resid = x - f * beta;
  const Vector d = (resid.colwise().squaredNorm().transpose() / t).cwiseMax(kResidualVarianceFloor);
  const Matrix sigma_f = f.transpose() * f / t;
  Matrix m = beta.transpose() * sigma_f * beta;
  m.diagonal() += d;
  return make_estimate(SymMatrix(m), EstimatorId::Ff3f);
}

double lw_target_intensity(const Matrix& obs, const Vector& market) {
  const Matrix x = demeaned(obs);
  const Vector f = centered(market);
  const Index n = x.cols();
  const double t = static_cast<double>(x.rows());
  const Matrix sample = x.transpose() * x / t;
  const Vector covmkt = x.transpose() * f / t;
  const double varmkt = f.squaredNorm() / t;
  if (!(varmkt > 0.0)) throw DegenerateInput("lw_shrinkage: market factor has zero variance");
  const Matrix prior = sim_cov(obs, market).matrix.mat();

  const double c = (sample - prior).squaredNorm();
  if (c == 0.0) return 0.0;
  const Matrix y = x.cwiseAbs2();
  const double p = (y.transpose() * y).sum() / t - sample.squaredNorm();
  const double rdiag = y.cwiseAbs2().sum() / t - sample.diagonal().squaredNorm();
  const Matrix z = x.array().colwise() * f.array();
  const Matrix v1 = y.transpose() * z / t - (covmkt * Vector::Ones(n).transpose()).cwiseProduct(sample);
  const double roff1 =
      (v1.array() * (Vector::Ones(n) * covmkt.transpose()).array()).sum() / varmkt -
      v1.diagonal().dot(covmkt) / varmkt;
  const Matrix v3 = z.transpose() * z / t - varmkt * sample;
  const double roff3 =
      (v3.array() * (covmkt * covmkt.transpose()).array()).sum() / (varmkt * varmkt) -
      v3.diagonal().dot(covmkt.cwiseAbs2()) / (varmkt * varmkt);
  const double r = rdiag + 2.0 * roff1 - roff3;
  return (p - r) / c / t;
}

ShrinkageResult lw_shrinkage(const Matrix& obs, const Vector& market,
                             std::optional<double> alpha_override) {
  require_rows(obs, 3, "lw_shrinkage");
  double alpha;
  if (alpha_override) {
    alpha = *alpha_override;
    if (alpha < 0.0 || alpha > 1.0) throw DegenerateInput("lw_shrinkage: alpha outside [0, 1]");
  } else {
    alpha = 1.0 - std::clamp(lw_target_intensity(obs, market), 0.0, 1.0);
  }
  const SymMatrix s = sample_covariance(obs);
  const SymMatrix target = sim_cov(obs, market).matrix;
  ShrinkageResult out;
  out.estimate = make_estimate(SymMatrix(alpha * s.mat() + (1.0 - alpha) * target.mat()),
                               EstimatorId::Lw);
  out.estimate.params["alpha_star"] = alpha;
  out.diagnostics.alpha_star = alpha;
  return out;
}

std::vector<std::array<double, 3>> simplex_grid(int steps) {
  std::vector<std::array<double, 3>> out;
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; i + j <= steps; ++j) {
      const int k = steps - i - j;
      out.push_back({static_cast<double>(i) / steps, static_cast<double>(j) / steps,
                     static_cast<double>(k) / steps});
    }
  }
  return out;
}

namespace {

struct KdmParts {
  SymMatrix sample_pinv;
  SymMatrix sim_inv;
};

KdmParts kdm_parts(const Matrix& obs, const Vector& market) {
  return {pseudo_inverse(sample_covariance(obs)), inverse_pd(sim_cov(obs, market).matrix)};
}

Matrix kdm_combine(const KdmParts& parts, const std::array<double, 3>& zeta) {
  Matrix p = zeta[0] * parts.sample_pinv.mat() + zeta[2] * parts.sim_inv.mat();
  p.diagonal().array() += zeta[1];
  return p;
}

}  // namespace

std::vector<double> kdm_cv_scores(const Matrix& obs, const Vector& market, int folds,
                                  const std::vector<std::array<double, 3>>& candidates) {
  const Index n = obs.cols();
  std::vector<double> scores(candidates.size(), 0.0);
  const auto blocks = contiguous_folds(obs.rows(), folds);
  for (const auto& [b, e] : blocks) {
    const Matrix train = drop_rows(obs, b, e);
    const Vector train_mkt = drop_rows(market, b, e);
    const KdmParts parts = kdm_parts(train, train_mkt);
    const Vector ones = Vector::Ones(n);
    const Vector a = parts.sample_pinv.mat() * ones;
    const Vector c = parts.sim_inv.mat() * ones;
    const Matrix test = obs.middleRows(b, e - b);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const auto& z = candidates[k];
      const Vector p1 = z[0] * a + z[1] * ones + z[2] * c;
      const double denom = p1.sum();
      if (!(denom > 0.0) || !std::isfinite(denom)) {
        scores[k] = kInf;
        continue;
      }
      const Vector w = p1 / denom;
      const Vector r = test * w;
      const double var = (r.array() - r.mean()).square().mean();
      scores[k] += var / static_cast<double>(blocks.size());
    }
  }
  return scores;
}

KdmResult kdm_precision(const Matrix& obs, const Vector& market, const KdmOptions& options) {
  require_rows(obs, 3, "kdm_precision");
  KdmResult out;
  if (options.zeta) {
    out.zeta = *options.zeta;
  } else {
    out.candidates = simplex_grid(options.grid_steps);
    out.cv_scores = kdm_cv_scores(obs, market, options.folds, out.candidates);
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.cv_scores.size(); ++k) {
      if (out.cv_scores[k] < out.cv_scores[best]) best = k;
    }
    out.zeta = out.candidates[best];
  }
  out.precision = SymMatrix(kdm_combine(kdm_parts(obs, market), out.zeta));
  out.positive_definite = is_positive_definite(out.precision);
  return out;
}

CovarianceEstimate adz_design_free(const Matrix& obs, Index split_n, bool swap_halves) {
  const Index t = obs.rows();
  if (split_n < 2 || split_n > t - 2) {
    throw InsufficientDimensions("adz_design_free: split point must satisfy 2 <= n <= T - 2");
  }
  const EigenPair full = sym_eigen(sample_covariance(obs));
  Matrix x1 = obs.topRows(split_n);
  Matrix x2 = obs.bottomRows(t - split_n);
  if (swap_halves) {
    x1 = obs.bottomRows(t - split_n);
    x2 = obs.topRows(split_n);
  }
  const EigenPair first = sym_eigen(sample_covariance(x1));
  const SymMatrix s2 = sample_covariance(x2);
  const Vector p_tilde =
      (first.vectors.transpose() * s2.mat() * first.vectors).diagonal().cwiseMax(0.0);
  auto e = make_estimate(
      SymMatrix(full.vectors * p_tilde.asDiagonal() * full.vectors.transpose()), EstimatorId::Adz);
  e.params["split_n"] = static_cast<double>(split_n);
  return e;
}

SymMatrix threshold_off_diagonal(const SymMatrix& s, double kappa) {
  Matrix m = s.mat();
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (i != j) m(i, j) = soft_threshold(m(i, j), kappa);
    }
  }
  return SymMatrix(m);
}

namespace {

double max_off_diagonal(const SymMatrix& s) {
  double mx = 0.0;
  for (Index j = 0; j < s.dim(); ++j) {
    for (Index i = 0; i < j; ++i) mx = std::max(mx, std::abs(s(i, j)));
  }
  return mx;
}

}  // namespace

std::vector<double> st_cv_scores(const Matrix& obs, const std::vector<double>& kappas, int splits,
                                 std::uint64_t seed) {
  const Index t = obs.rows();
  const Index half = t / 2;
  std::mt19937_64 rng(seed);
  std::vector<double> scores(kappas.size(), 0.0);
  std::vector<Index> order(static_cast<std::size_t>(t));
  for (int s = 0; s < splits; ++s) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    Matrix train(half, obs.cols()), valid(t - half, obs.cols());
    for (Index i = 0; i < half; ++i) train.row(i) = obs.row(order[i]);
    for (Index i = half; i < t; ++i) valid.row(i - half) = obs.row(order[i]);
    const SymMatrix s_train = sample_covariance(train);
    const SymMatrix s_valid = sample_covariance(valid);
    for (std::size_t k = 0; k < kappas.size(); ++k) {
      scores[k] += (threshold_off_diagonal(s_train, kappas[k]).mat() - s_valid.mat()).squaredNorm() /
                   static_cast<double>(splits);
    }
  }
  return scores;
}

ShrinkageResult st_threshold_cov(const Matrix& obs, const StOptions& options) {
  require_rows(obs, 4, "st_threshold_cov");
  const SymMatrix s = sample_covariance(obs);
  ShrinkageResult out;
  double kappa;
  if (options.kappa) {
    kappa = *options.kappa;
  } else {
    const double top = max_off_diagonal(s);
    const int g = std::max(options.grid_size, 2);
    for (int k = 0; k < g; ++k) out.diagnostics.cv_grid.push_back(top * k / (g - 1));
    out.diagnostics.cv_scores =
        st_cv_scores(obs, out.diagnostics.cv_grid, options.splits, options.seed);
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.diagnostics.cv_scores.size(); ++k) {
      if (out.diagnostics.cv_scores[k] < out.diagnostics.cv_scores[best]) best = k;
    }
    kappa = out.diagnostics.cv_grid[best];
  }
  out.estimate = make_estimate(threshold_off_diagonal(s, kappa), EstimatorId::St);
  out.estimate.params["kappa"] = kappa;
  out.diagnostics.kappa = kappa;
  return out;
}

double bt_objective(const SymMatrix& sigma, const SymMatrix& s, double alpha) {
  Eigen::LLT<Matrix> llt(sigma.mat());
  if (llt.info() != Eigen::Success) return kInf;
  const Vector l = llt.matrixLLT().diagonal();
  if ((l.array() <= 0.0).any()) return kInf;
  const double log_det = 2.0 * l.array().log().sum();
  const double tr = llt.solve(s.mat()).trace();
  const double penalty = sigma.mat().cwiseAbs().sum() - sigma.mat().diagonal().cwiseAbs().sum();
  const double v = log_det + tr + alpha * penalty;
  return std::isfinite(v) ? v : kInf;
}

double bt_alpha_max(const SymMatrix& s) {
  double mx = 0.0;
  for (Index j = 0; j < s.dim(); ++j) {
    for (Index i = 0; i < j; ++i) mx = std::max(mx, std::abs(s(i, j)) / (s(i, i) * s(j, j)));
  }
  return mx;
}

BtFit bt_fit(const SymMatrix& s_in, double alpha, const BtOptions& options) {
  if (alpha < 0.0) throw DegenerateInput("bt_fit: alpha must be nonnegative");
  BtFit fit;
  fit.alpha = alpha;
  SymMatrix s = s_in;
  if (!is_positive_definite(s)) {
    Matrix m = s.mat();
    m.diagonal().array() += options.epsilon_ridge;
    s = SymMatrix(m);
    fit.ridge = options.epsilon_ridge;
  }
  SymMatrix sigma = s;
  double obj = bt_objective(sigma, s, alpha);
  if (!std::isfinite(obj)) throw NotPositiveDefinite("bt_fit: starting point is not PD");
  fit.objective_trace.push_back(obj);
  double t = 1.0;
  for (int it = 1; it <= options.max_iter; ++it) {
    fit.n_iter = it;
    const Matrix p = inverse_pd(sigma).mat();
    const Matrix grad = p - p * s.mat() * p;
    bool accepted = false;
    SymMatrix cand;
    double cand_obj = kInf;
    for (int h = 0; h < 60; ++h) {
      Matrix step = sigma.mat() - t * grad;
      for (Index j = 0; j < step.cols(); ++j) {
        for (Index i = 0; i < step.rows(); ++i) {
          if (i != j) step(i, j) = soft_threshold(step(i, j), t * alpha);
        }
      }
      cand = SymMatrix(step);
      cand_obj = bt_objective(cand, s, alpha);
      if (cand_obj <= obj) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      fit.converged = true;
      break;
    }
    const double delta = (cand.mat() - sigma.mat()).cwiseAbs().maxCoeff();
    sigma = std::move(cand);
    obj = cand_obj;
    fit.objective_trace.push_back(obj);
    if (delta < options.conv_tol) {
      fit.converged = true;
      break;
    }
    t = std::min(2.0 * t, 1e6);
  }
  fit.sigma = sigma;
  return fit;
}

BtResult bt_sparse_cov(const Matrix& obs, const BtOptions& options) {
  require_rows(obs, 10, "bt_sparse_cov");
  const SymMatrix s = sample_covariance(obs);
  BtResult out;
  double alpha;
  if (options.alpha) {
    alpha = *options.alpha;
  } else {
    const double top = bt_alpha_max(s);
    const int g = std::max(options.grid_size, 2);
    for (int k = 0; k < g; ++k) {
      const double frac = static_cast<double>(g - 1 - k) / (g - 1);
      out.diagnostics.cv_grid.push_back(top * std::pow(options.grid_span, frac));
    }
    out.diagnostics.cv_scores.assign(out.diagnostics.cv_grid.size(), 0.0);
    BtOptions cv = options;
    cv.max_iter = options.cv_max_iter;
    const auto blocks = contiguous_folds(obs.rows(), options.folds);
    for (const auto& [b, e] : blocks) {
      const SymMatrix s_train = sample_covariance(drop_rows(obs, b, e));
      const SymMatrix s_test = sample_covariance(obs.middleRows(b, e - b));
      for (std::size_t k = 0; k < out.diagnostics.cv_grid.size(); ++k) {
        double score = kInf;
        try {
          score = bt_objective(bt_fit(s_train, out.diagnostics.cv_grid[k], cv).sigma, s_test, 0.0);
        } catch (const Error&) {
        }
        out.diagnostics.cv_scores[k] += score / static_cast<double>(blocks.size());
      }
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.diagnostics.cv_scores.size(); ++k) {
      if (out.diagnostics.cv_scores[k] < out.diagnostics.cv_scores[best]) best = k;
    }
    alpha = out.diagnostics.cv_grid[best];
  }
  out.fit = bt_fit(s, alpha, options);
  out.estimate = make_estimate(out.fit.sigma, EstimatorId::Bt);
  out.estimate.params["alpha_n"] = alpha;
  out.estimate.params["converged"] = out.fit.converged ? 1.0 : 0.0;
  out.diagnostics.alpha_n = alpha;
  if (!out.estimate.positive_definite) {
    throw NotPositiveDefinite("bt_sparse_cov: fitted covariance is not PD");
  }
  return out;
}

}  // namespace safcov

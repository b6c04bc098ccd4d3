#include "safcov/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "safcov/parallel.hpp"

namespace safcov {

namespace {

constexpr double kMinDesignEigenvalue = 1e-6;
constexpr int kMaxRedraws = 1000;

template <typename Fill>
SymMatrix draw_until_pd(Index n, std::uint64_t seed, Fill fill) {
  for (int k = 0; k < kMaxRedraws; ++k) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(k));
    Matrix m = Matrix::Identity(n, n);
    for (Index j = 1; j < n; ++j) {
      for (Index i = 0; i < j; ++i) {
        m(i, j) = fill(rng);
        m(j, i) = m(i, j);
      }
    }
    SymMatrix s(m);
    if (sym_eigenvalues(s).minCoeff() > kMinDesignEigenvalue) return s;
  }
  throw NumericalBreakdown("design generator: no positive definite draw found");
}

}  // namespace

std::string_view to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::Uniform:
      return "uniform";
    case DesignKind::Sparse:
      return "sparse";
    case DesignKind::Spiked:
      return "spiked";
  }
  return "unknown";
}

DesignKind parse_design_kind(std::string_view name) {
  if (name == "uniform") return DesignKind::Uniform;
  if (name == "sparse") return DesignKind::Sparse;
  if (name == "spiked") return DesignKind::Spiked;
  throw DegenerateInput("unknown design '" + std::string(name) + "'");
}

std::string_view to_string(LossScale scale) {
  return scale == LossScale::Covariance ? "covariance" : "correlation";
}

LossScale parse_loss_scale(std::string_view name) {
  if (name == "covariance") return LossScale::Covariance;
  if (name == "correlation") return LossScale::Correlation;
  throw DegenerateInput("unknown loss scale '" + std::string(name) + "'");
}

SymMatrix correlation_of(const SymMatrix& sigma) {
  const Vector inv_sd = sigma.diag().cwiseSqrt().cwiseInverse();
  return SymMatrix(inv_sd.asDiagonal() * sigma.mat() * inv_sd.asDiagonal());
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SymMatrix gen_uniform_design(Index n, double eta, std::uint64_t seed) {
  if (n < 1) throw InsufficientDimensions("gen_uniform_design: N must be >= 1");
  if (eta < 0.0) throw DegenerateInput("gen_uniform_design: eta must be >= 0");
  return draw_until_pd(n, seed, [eta](std::mt19937_64& rng) {
    return eta * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  });
}

SymMatrix gen_sparse_design(Index n, double p, std::uint64_t seed) {
  if (n < 1) throw InsufficientDimensions("gen_sparse_design: N must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw DegenerateInput("gen_sparse_design: p must lie in (0, 1)");
  return draw_until_pd(n, seed, [p](std::mt19937_64& rng) {
    const bool on = std::bernoulli_distribution(p)(rng);
    const double v = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    return on ? v : 0.0;
  });
}

FactorDesign gen_spiked_design(Index n, double eta, std::uint64_t seed) {
  if (n < 5) throw InsufficientDimensions("gen_spiked_design: N must be >= 5");
  const double nn = static_cast<double>(n);
  const double spikes[4] = {nn, nn, std::pow(nn, 0.8), std::pow(nn, 0.5)};
  FactorDesign out;
  out.loadings = Matrix::Zero(n, 4);
  for (int k = 0; k < 4; ++k) out.loadings(k, k) = std::sqrt(spikes[k]);
  Matrix sigma = gen_uniform_design(n, eta, seed).mat();
  for (int k = 0; k < 4; ++k) sigma(k, k) += spikes[k];
  out.sigma = SymMatrix(sigma);
  return out;
}

FactorDesign gen_factor_design(Index n, const std::vector<double>& betas, std::uint64_t seed) {
  if (betas.empty()) throw DegenerateInput("gen_factor_design: no factors");
  std::mt19937_64 rng(seed);
  const double nn = static_cast<double>(n);
  FactorDesign out;
  out.loadings = Matrix::Zero(n, static_cast<Index>(betas.size()));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < betas.size(); ++k) {
    const double mass = std::pow(nn, betas[k]);
    const Index support = std::clamp<Index>(static_cast<Index>(std::lround(mass)), 1, n);
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::bernoulli_distribution flip(0.5);
    Vector col = Vector::Zero(n);
    for (Index i = 0; i < support; ++i) {
      const double sign = k > 0 && flip(rng) ? -1.0 : 1.0;
      col(order[i]) = sign * mag(rng);
    }
    col *= std::sqrt(mass) / col.norm();
    out.loadings.col(static_cast<Index>(k)) = col;
  }
  Matrix sigma = out.loadings * out.loadings.transpose();
  sigma.diagonal().array() += 1.0;
  out.sigma = SymMatrix(sigma);
  return out;
}

Vector weak_factor_exponents(const Matrix& loadings) {
  const Vector ev = sym_eigenvalues(SymMatrix(loadings.transpose() * loadings));
  return ev.array().log() / std::log(static_cast<double>(loadings.rows()));
}

SymMatrix generate_design(const SimulationDesign& design, std::uint64_t seed) {
  switch (design.kind) {
    case DesignKind::Uniform:
      return gen_uniform_design(design.n, design.eta, seed);
    case DesignKind::Sparse:
      return gen_sparse_design(design.n, design.p, seed);
    case DesignKind::Spiked:
      return gen_spiked_design(design.n, design.eta, seed).sigma;
  }
  throw DegenerateInput("generate_design: unknown design");
}

ReturnPanel draw_panel(const SymMatrix& sigma, Index t, std::uint64_t seed, Distribution dist) {
  Eigen::LLT<Matrix> llt(sigma.mat());
  if (llt.info() != Eigen::Success || !is_positive_definite(sigma)) {
    throw NotPositiveDefinite("draw_panel: true covariance is not PD");
  }
  const Index n = sigma.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi(5.0);
  Matrix z(t, n);
  for (Index i = 0; i < t; ++i) {
    for (Index j = 0; j < n; ++j) z(i, j) = normal(rng);
    if (dist == Distribution::StudentT5) {
      // t_5 has variance 5/3; sqrt(3/5) * sqrt(5/W) = sqrt(3/W)
      z.row(i) *= std::sqrt(3.0 / chi(rng));
    }
  }
  const Matrix l = llt.matrixL();
  return make_panel(z * l.transpose());
}

std::vector<EstimatorSummary> summarize(const std::vector<ReplicationScore>& scores,
                                        const std::vector<EstimatorId>& estimators) {
  std::vector<EstimatorSummary> out;
  for (EstimatorId id : estimators) {
    EstimatorSummary s;
    s.estimator = id;
    std::vector<double> losses;
    double spec = 0.0, weighted = 0.0;
    for (const auto& sc : scores) {
      if (sc.estimator != id) continue;
      if (!sc.ok) {
        ++s.n_failed;
        continue;
      }
      losses.push_back(sc.frobenius_loss);
      spec += sc.spectral_loss;
      weighted += sc.weighted_loss;
    }
    s.n_ok = static_cast<int>(losses.size());
    if (!losses.empty()) {
      const double k = static_cast<double>(losses.size());
      s.mean = std::accumulate(losses.begin(), losses.end(), 0.0) / k;
      s.mean_spectral = spec / k;
      s.mean_weighted = weighted / k;
      double ss = 0.0;
      for (double v : losses) ss += (v - s.mean) * (v - s.mean);
      s.stderr_ = losses.size() > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
      std::vector<double> sorted = losses;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t m = sorted.size() / 2;
      s.median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
    }
    out.push_back(s);
  }
  return out;
}

StudyResult run_study(const StudyConfig& config) {
  if (config.estimators.empty()) throw DegenerateInput("run_study: no estimators given");
  if (config.reps < 1) throw DegenerateInput("run_study: reps must be >= 1");
  const auto& d = config.design;
  StudyResult result;
  result.sigma = generate_design(d, d.seed);
  const std::size_t n_est = config.estimators.size();
  result.scores.resize(static_cast<std::size_t>(config.reps) * n_est);

  parallel_for(static_cast<std::size_t>(config.reps), config.jobs, [&](std::size_t rep) {
    const std::uint64_t rep_seed = stream_seed(d.seed, rep);
    const SymMatrix sigma =
        config.redraw_sigma ? generate_design(d, stream_seed(rep_seed, 1)) : result.sigma;
    ReturnPanel panel = draw_panel(sigma, d.t, stream_seed(rep_seed, 2), config.dist);
    const bool corr = config.scale == LossScale::Correlation;
    const SymMatrix target = corr ? correlation_of(sigma) : sigma;
    if (corr) panel = standardize(panel);
    for (std::size_t e = 0; e < n_est; ++e) {
      ReplicationScore& sc = result.scores[rep * n_est + e];
      sc.estimator = config.estimators[e];
      sc.rep = static_cast<int>(rep);
      EstimatorContext ctx;
      ctx.truth = &target;
      ctx.seed = stream_seed(rep_seed, 3);
      ctx.saf = config.saf;
      const auto start = std::chrono::steady_clock::now();
      try {
        const SymMatrix est = covariance_of(run_estimator(sc.estimator, panel.obs, ctx));
        const SymMatrix err(est.mat() - target.mat());
        sc.frobenius_loss = err.mat().squaredNorm();
        sc.spectral_loss = spectral_norm(err);
        sc.weighted_loss = weighted_quadratic_norm(err, target);
        sc.ok = std::isfinite(sc.frobenius_loss);
        if (!sc.ok) sc.error = "non-finite loss";
      } catch (const std::exception& ex) {
        sc.ok = false;
        sc.error = ex.what();
      }
      sc.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  });
  result.summary = summarize(result.scores, config.estimators);
  return result;
}

}  // namespace safcov

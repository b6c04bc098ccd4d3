#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "safcov/rivals.hpp"
#include "safcov/simulation.hpp"

using namespace safcov;

namespace {

struct SingleIndex {
  Matrix obs;
  Vector market;
  Vector beta;
};

SingleIndex single_index(Index n, Index t, std::uint64_t seed, double noise = 0.5) {
  std::mt19937_64 rng(seed);
  SingleIndex s;
  s.market = oracle::random_matrix(t, 1, rng).col(0);
  s.beta = oracle::random_positive(n, rng, 0.5, 1.5);
  s.obs = s.market * s.beta.transpose() + oracle::random_matrix(t, n, rng, noise);
  return s;
}

/// Eigenvectors in descending eigenvalue order from a self-adjoint solver.
Matrix descending_vectors(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  return es.eigenvectors().rowwise().reverse();
}

}  // namespace

TEST_CASE("sample_cov") {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(30, 6, rng);
  CHECK((sample_cov(x).matrix.mat() - oracle::loop_covariance(x)).cwiseAbs().maxCoeff() < 1e-12);

  Matrix dup = oracle::random_matrix(30, 4, rng);
  dup.col(3) = dup.col(1);
  const SymMatrix s = sample_cov(dup).matrix;
  CHECK(s.mat().row(3) == s.mat().row(1));
  CHECK_FALSE(is_positive_definite(s));

  Matrix one(4, 1);
  one << 1.0, 3.0, 5.0, 7.0;  // unbiased variance 20/3, divisor T gives 5
  CHECK(sample_cov(one).matrix(0, 0) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("sim_cov") {
  SUBCASE("per-asset normal equations") {
    const SingleIndex d = single_index(8, 120, 2);
    const CovarianceEstimate e = sim_cov(d.obs, d.market);
    const double var_f = oracle::loop_covariance(d.market)(0, 0);
    Vector beta(8), resid(8);
    Matrix z(120, 2);
    z.col(0).setOnes();
    z.col(1) = d.market;
    for (Index i = 0; i < 8; ++i) {
      const Vector coef = oracle::normal_equations(d.market, d.obs.col(i));
      beta(i) = coef(1);
      resid(i) = (d.obs.col(i) - z * coef).squaredNorm() / 120.0;
      CHECK(std::abs(coef(1) - d.beta(i)) < 0.3);
    }
    const Matrix expected = var_f * beta * beta.transpose() + Matrix(resid.asDiagonal());
    CHECK((e.matrix.mat() - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("assets identical to the factor") {
    std::mt19937_64 rng(3);
    const Vector f = oracle::random_matrix(50, 1, rng).col(0);
    const Matrix x = f.replicate(1, 4);
    const CovarianceEstimate e = sim_cov(x, f);
    const double v = oracle::loop_covariance(f)(0, 0);
    const Matrix expected = v * Matrix::Ones(4, 4) + kResidualVarianceFloor * Matrix::Identity(4, 4);
    CHECK((e.matrix.mat() - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("factor orthogonal to the assets") {
    std::mt19937_64 rng(4);
    Matrix x = oracle::random_matrix(200, 3, rng);
    Vector f = oracle::random_matrix(200, 1, rng).col(0);
    const Matrix xd = demeaned(x);
    f = demeaned(f).col(0);
    for (Index j = 0; j < 3; ++j) x.col(j) = xd.col(j) - f * (f.dot(xd.col(j)) / f.squaredNorm());
    const SymMatrix s = sim_cov(x, f).matrix;
    CHECK(std::abs(s(0, 1)) < 1e-12);
    CHECK(std::abs(s(0, 0) - oracle::loop_covariance(x)(0, 0)) < 1e-12);
  }
}

TEST_CASE("ff3f_cov") {
  std::mt19937_64 rng(5);
  const Matrix f = oracle::random_matrix(150, 3, rng);
  const Matrix b = oracle::random_matrix(3, 5, rng);
  const Matrix x = f * b + oracle::random_matrix(150, 5, rng, 0.3);
  const CovarianceEstimate e = ff3f_cov(x, f);
  Matrix beta(3, 5);
  Vector resid(5);
  for (Index i = 0; i < 5; ++i) {
    const Vector coef = oracle::normal_equations(f, x.col(i));
    beta.col(i) = coef.tail(3);
    Matrix z(150, 4);
    z.col(0).setOnes();
    z.rightCols(3) = f;
    resid(i) = (x.col(i) - z * coef).squaredNorm() / 150.0;
  }
  const Matrix expected = beta.transpose() * oracle::loop_covariance(f) * beta + Matrix(resid.asDiagonal());
  CHECK((e.matrix.mat() - expected).cwiseAbs().maxCoeff() < 1e-10);

  SUBCASE("first factor only") {
    Eigen::HouseholderQR<Matrix> qr(demeaned(oracle::random_matrix(400, 3, rng)));
    const Matrix q = Matrix(qr.householderQ() * Matrix::Identity(400, 3)) * std::sqrt(400.0);
    const Matrix y = q.col(0).replicate(1, 4) + oracle::random_matrix(400, 4, rng, 0.05);
    for (Index i = 0; i < 4; ++i) {
      const Vector coef = oracle::normal_equations(q, y.col(i));
      CHECK(std::abs(coef(1) - 1.0) < 0.02);
      CHECK(std::abs(coef(2)) < 0.02);
      CHECK(std::abs(coef(3)) < 0.02);
    }
    const SymMatrix s = ff3f_cov(y, q).matrix;
    CHECK(std::abs(s(0, 1) - 1.0) < 0.05);
  }
  SUBCASE("collinear factors") {
    Matrix bad = f;
    bad.col(2) = bad.col(1);
    CHECK_THROWS_AS(ff3f_cov(x, bad), DegenerateInput);
  }
}

TEST_CASE("lw_shrinkage") {
  const SingleIndex d = single_index(10, 60, 6);
  const SymMatrix s = sample_covariance(d.obs);
  const SymMatrix target = sim_cov(d.obs, d.market).matrix;
  CHECK((lw_shrinkage(d.obs, d.market, 1.0).estimate.matrix.mat() - s.mat()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((lw_shrinkage(d.obs, d.market, 0.0).estimate.matrix.mat() - target.mat()).cwiseAbs().maxCoeff() < 1e-15);
  const SingleIndex big = single_index(20, 600, 7);
  const ShrinkageResult r = lw_shrinkage(big.obs, big.market);
  REQUIRE(r.diagnostics.alpha_star.has_value());
  CHECK(*r.diagnostics.alpha_star >= 0.0);
  CHECK(*r.diagnostics.alpha_star <= 1.0);
  CHECK(is_positive_definite(r.estimate.matrix));
  CHECK_THROWS_AS(lw_shrinkage(d.obs, d.market, 1.5), DegenerateInput);
}

TEST_CASE("kdm_precision") {
  const SingleIndex d = single_index(8, 80, 8);
  SUBCASE("sample vertex") {
    KdmOptions o;
    o.zeta = std::array<double, 3>{1.0, 0.0, 0.0};
    const KdmResult r = kdm_precision(d.obs, d.market, o);
    CHECK((r.precision.mat() - oracle::dense_inverse(oracle::loop_covariance(d.obs))).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("identity vertex") {
    KdmOptions o;
    o.zeta = std::array<double, 3>{0.0, 1.0, 0.0};
    const KdmResult r = kdm_precision(d.obs, d.market, o);
    CHECK(r.precision.mat() == Matrix::Identity(8, 8));
  }
  SUBCASE("cross-validated choice is the grid minimum") {
    const KdmResult r = kdm_precision(d.obs, d.market);
    const auto grid = simplex_grid(10);
    CHECK(grid.size() == 66);
    // independent re-evaluation of every candidate: contiguous folds, GMVP variance
    const auto folds = contiguous_folds(80, 5);
    std::vector<double> scores(grid.size(), 0.0);
    for (const auto& [b, e] : folds) {
      const Matrix train = drop_rows(d.obs, b, e);
      Vector mtrain(80 - (e - b));
      Index k = 0;
      for (Index i = 0; i < 80; ++i) {
        if (i < b || i >= e) mtrain(k++) = d.market(i);
      }
      const Matrix test = d.obs.middleRows(b, e - b);
      for (std::size_t c = 0; c < grid.size(); ++c) {
        KdmOptions o;
        o.zeta = grid[c];
        const Matrix p = kdm_precision(train, mtrain, o).precision.mat();
        const Vector one = Vector::Ones(8);
        const double denom = one.dot(p * one);
        if (!(denom > 0.0)) {
          scores[c] = INFINITY;
          continue;
        }
        const Vector w = p * one / denom;
        const Vector ret = test * w;
        const double m = ret.mean();
        scores[c] += (ret.array() - m).square().sum() / static_cast<double>(ret.size()) / folds.size();
      }
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c) {
      if (scores[c] < scores[best]) best = c;
    }
    CHECK(r.zeta == grid[best]);
  }
}

TEST_CASE("adz_design_free") {
  std::mt19937_64 rng(9);
  SUBCASE("duplicated halves return the first-half covariance") {
    const Matrix half = oracle::random_matrix(40, 5, rng);
    Matrix x(80, 5);
    x << half, half;
    const CovarianceEstimate e = adz_design_free(x, 40);
    CHECK((e.matrix.mat() - oracle::loop_covariance(half)).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("both split orders against the displayed formulas") {
    const Matrix x = oracle::random_matrix(60, 6, rng);
    for (bool swap : {false, true}) {
      const Matrix x1 = swap ? x.bottomRows(35) : x.topRows(25);
      const Matrix x2 = swap ? x.topRows(25) : x.bottomRows(35);
      const Matrix g = descending_vectors(oracle::loop_covariance(x));
      const Matrix g1 = descending_vectors(oracle::loop_covariance(x1));
      const Vector p = (g1.transpose() * oracle::loop_covariance(x2) * g1).diagonal();
      const Matrix expected = g * p.asDiagonal() * g.transpose();
      CHECK((adz_design_free(x, 25, swap).matrix.mat() - expected).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("eigenvectors are the sample eigenvectors") {
    const Matrix x = oracle::random_matrix(60, 6, rng);
    const Matrix g = descending_vectors(oracle::loop_covariance(x));
    const Matrix out = adz_design_free(x, 30).matrix.mat();
    const Matrix rotated = g.transpose() * out * g;
    CHECK((rotated - Matrix(rotated.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("st_threshold_cov") {
  std::mt19937_64 rng(10);
  const Matrix x = oracle::random_matrix(60, 6, rng);
  const SymMatrix s = sample_covariance(x);
  StOptions o;
  o.kappa = 0.0;
  CHECK(st_threshold_cov(x, o).estimate.matrix.mat() == s.mat());
  double max_off = 0.0;
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 6; ++j) {
      if (i != j) max_off = std::max(max_off, std::abs(s(i, j)));
    }
  }
  o.kappa = max_off;
  CHECK(st_threshold_cov(x, o).estimate.matrix.mat() == Matrix(s.diag().asDiagonal()));

  SUBCASE("chosen kappa minimizes the recomputed CV score") {
    const SymMatrix sigma = gen_sparse_design(30, 0.1, 11);
    const Matrix y = draw_panel(sigma, 60, 12).obs;
    StOptions cv;
    cv.seed = 13;
    const ShrinkageResult r = st_threshold_cov(y, cv);
    REQUIRE(r.diagnostics.kappa.has_value());
    const auto& grid = r.diagnostics.cv_grid;
    const std::vector<double> again = st_cv_scores(y, grid, cv.splits, cv.seed);
    std::size_t best = 0;
    for (std::size_t k = 1; k < again.size(); ++k) {
      if (again[k] < again[best]) best = k;
    }
    CHECK(*r.diagnostics.kappa == grid[best]);
  }
}

TEST_CASE("bt_sparse_cov") {
  std::mt19937_64 rng(14);
  const Matrix x = oracle::random_matrix(80, 6, rng);
  const SymMatrix s = sample_covariance(x);
  SUBCASE("zero penalty converges to S") {
    BtOptions o;
    o.conv_tol = 1e-10;
    const BtFit fit = bt_fit(s, 0.0, o);
    CHECK((fit.sigma.mat() - s.mat()).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("huge penalty gives diag(S)") {
    const BtFit fit = bt_fit(s, 1e6);
    CHECK((fit.sigma.mat() - Matrix(s.diag().asDiagonal())).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("objective trace never increases") {
    for (int k = 0; k < 20; ++k) {
      const Matrix y = oracle::random_matrix(40, 5 + k % 6, rng);
      const SymMatrix sy = sample_covariance(y);
      const BtFit fit = bt_fit(sy, 0.3 * bt_alpha_max(sy));
      for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
        CHECK(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-8);
      }
    }
  }
  SUBCASE("objective matches a dense evaluation") {
    const Matrix sig = oracle::random_spd(6, rng);
    double off = 0.0;
    for (Index i = 0; i < 6; ++i) {
      for (Index j = 0; j < 6; ++j) {
        if (i != j) off += std::abs(sig(i, j));
      }
    }
    const double expected = oracle::gaussian_likelihood(sig, s.mat()) + 0.2 * off;
    CHECK(std::abs(bt_objective(SymMatrix(sig), s, 0.2) - expected) < 1e-10);
  }
  SUBCASE("cross-validated estimate is PD") {
    const BtResult r = bt_sparse_cov(x);
    CHECK(r.estimate.positive_definite);
    REQUIRE(r.diagnostics.alpha_n.has_value());
    CHECK(r.diagnostics.cv_grid.size() == 8);
  }
}

TEST_CASE("fold helpers") {
  const auto f = contiguous_folds(23, 5);
  REQUIRE(f.size() == 5);
  CHECK(f.front().first == 0);
  CHECK(f.back().second == 23);
  for (std::size_t i = 1; i < f.size(); ++i) CHECK(f[i].first == f[i - 1].second);
  Matrix x(5, 1);
  x << 0, 1, 2, 3, 4;
  const Matrix kept = drop_rows(x, 1, 3);
  CHECK(kept.rows() == 3);
  CHECK(kept(1, 0) == 3.0);
}

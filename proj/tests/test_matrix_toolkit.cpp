#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "safcov/matrix_toolkit.hpp"

using namespace safcov;

TEST_CASE("soft_threshold examples") {
  CHECK(soft_threshold(0.5, 0.2) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(soft_threshold(-0.1, 0.2) == 0.0);
  CHECK(soft_threshold(-0.75, 0.3) == doctest::Approx(-0.45).epsilon(1e-12));
  CHECK(soft_threshold(0.2, 0.2) == 0.0);
}

TEST_CASE("soft_threshold is odd and a contraction") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0), tau(0.0, 2.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng), y = u(rng), t = tau(rng);
    CHECK(soft_threshold(-x, t) == -soft_threshold(x, t));
    CHECK(std::abs(soft_threshold(x, t) - soft_threshold(y, t)) <= std::abs(x - y) + 1e-15);
  }
}

TEST_CASE("SymMatrix symmetrizes on construction") {
  Matrix a(2, 2);
  a << 1.0, 2.0, 4.0, 3.0;
  const SymMatrix s(a);
  CHECK(s(0, 1) == 3.0);
  CHECK(s(1, 0) == s(0, 1));
}

TEST_CASE("frobenius_norm") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 4.0;
  CHECK(frobenius_norm(SymMatrix(d)) == doctest::Approx(5.0).epsilon(1e-12));
  for (Index n : {1, 4, 9}) {
    CHECK(frobenius_norm(SymMatrix::identity(n)) == doctest::Approx(std::sqrt(double(n))).epsilon(1e-12));
  }
  std::mt19937_64 rng(11);
  const Matrix a = oracle::random_matrix(10, 10, rng);
  CHECK(std::abs(frobenius_norm(a) - std::sqrt(oracle::sum_squares(a))) < 1e-12);
}

TEST_CASE("spectral_norm") {
  Vector d(3);
  d << 2.0, -5.0, 1.0;
  CHECK(spectral_norm(SymMatrix::diagonal(d)) == doctest::Approx(5.0));
  CHECK(spectral_norm(SymMatrix::identity(6)) == doctest::Approx(1.0));
  Vector v(4);
  v << 1.0, 2.0, 1.0, 1.0;  // |v|^2 = 7
  CHECK(spectral_norm(SymMatrix(v * v.transpose())) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("norm inequalities") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const Index n = 2 + k % 9;
    const SymMatrix a(oracle::random_matrix(n, n, rng));
    const double f = frobenius_norm(a), s = spectral_norm(a);
    CHECK(f >= s - 1e-12);
    CHECK(f <= std::sqrt(double(n)) * s + 1e-12);
  }
}

TEST_CASE("weighted_quadratic_norm") {
  CHECK(weighted_quadratic_norm(SymMatrix::identity(4), SymMatrix::identity(4)) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(weighted_quadratic_norm(SymMatrix(Matrix::Zero(4, 4)), SymMatrix::identity(4)) == 0.0);
  std::mt19937_64 rng(17);
  const Matrix sigma = oracle::random_spd(6, rng);
  const Matrix a = oracle::random_matrix(6, 6, rng);
  const Matrix a_sym = 0.5 * (a + a.transpose());
  const Matrix r = oracle::inverse_root(sigma);
  const double expected = std::sqrt(oracle::sum_squares(r * a_sym * r)) / std::sqrt(6.0);
  CHECK(std::abs(weighted_quadratic_norm(SymMatrix(a_sym), SymMatrix(sigma)) - expected) < 1e-10);
}

TEST_CASE("sym_eigen contract") {
  std::mt19937_64 rng(21);
  const SymMatrix a(oracle::random_spd(12, rng));
  const EigenPair ep = sym_eigen(a);
  for (Index i = 1; i < ep.values.size(); ++i) CHECK(ep.values(i - 1) >= ep.values(i));
  const Matrix rec = ep.vectors * ep.values.asDiagonal() * ep.vectors.transpose();
  CHECK((a.mat() - rec).norm() / a.mat().norm() < 1e-10);
  CHECK((ep.vectors.transpose() * ep.vectors - Matrix::Identity(12, 12)).norm() < 1e-10);
}

TEST_CASE("positive definiteness test is relative") {
  CHECK(is_positive_definite(SymMatrix::identity(3)));
  Vector d(3);
  d << 1e6, 1.0, 1e-5;
  CHECK(is_positive_definite(SymMatrix::diagonal(d)));
  d << 1e6, 1.0, 1e-7;
  CHECK_FALSE(is_positive_definite(SymMatrix::diagonal(d)));
  d << 1.0, 1.0, -1e-3;
  CHECK_FALSE(is_positive_definite(SymMatrix::diagonal(d)));
  CHECK_THROWS_AS(require_positive_definite(SymMatrix::diagonal(d), "test"), NotPositiveDefinite);
}

TEST_CASE("woodbury_precision") {
  std::mt19937_64 rng(29);
  SUBCASE("zero loadings leave the inverse unchanged") {
    const Matrix su_inv = oracle::random_spd(5, rng);
    const SymMatrix out = woodbury_precision(Matrix::Zero(5, 2), SymMatrix(su_inv));
    CHECK((out.mat() - su_inv).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("matches dense inversion") {
    const Matrix l = oracle::random_matrix(5, 2, rng);
    const Matrix su = oracle::random_spd(5, rng);
    const Matrix expected = oracle::dense_inverse(l * l.transpose() + su);
    const SymMatrix got = woodbury_precision(l, SymMatrix(oracle::dense_inverse(su)));
    CHECK((got.mat() - expected).cwiseAbs().maxCoeff() < 1e-10);
    const Vector phi = oracle::random_positive(5, rng);
    const Matrix expected_diag = oracle::dense_inverse(l * l.transpose() + Matrix(phi.asDiagonal()));
    CHECK((woodbury_precision_diag(l, phi).mat() - expected_diag).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(log_det_low_rank_diag(l, phi) -
                   oracle::dense_log_det(l * l.transpose() + Matrix(phi.asDiagonal()))) < 1e-10);
  }
  SUBCASE("orthonormal scaled columns shrink eigenvalues in closed form") {
    const Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(8, 3, rng));
    const Matrix q = qr.householderQ() * Matrix::Identity(8, 3);
    Vector d(3);
    d << 3.0, 2.0, 0.5;
    const Matrix l = q * d.asDiagonal();
    const Vector got = sym_eigenvalues(woodbury_precision(l, SymMatrix::identity(8)));
    // eigenvalues 1 (five times) and 1 / (1 + d_k^2), descending
    Vector expected(8);
    expected << 1, 1, 1, 1, 1, 1 / (1 + 0.25), 1 / (1 + 4.0), 1 / (1 + 9.0);
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("inverse property up to N = 200, r = 8") {
    for (Index n : {20, 80, 200}) {
      const Matrix l = oracle::random_matrix(n, 8, rng);
      const Vector phi = oracle::random_positive(n, rng);
      const Matrix sigma = l * l.transpose() + Matrix(phi.asDiagonal());
      const Matrix prod = woodbury_precision_diag(l, phi).mat() * sigma;
      CHECK((prod - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("sample_covariance against a double loop") {
  std::mt19937_64 rng(31);
  const Matrix x = oracle::random_matrix(40, 7, rng);
  CHECK((sample_covariance(x).mat() - oracle::loop_covariance(x)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inverse helpers") {
  std::mt19937_64 rng(37);
  const Matrix s = oracle::random_spd(6, rng);
  const SymMatrix r = inverse_sqrt(SymMatrix(s));
  CHECK((r.mat() * s * r.mat() - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((inverse_pd(SymMatrix(s)).mat() - oracle::dense_inverse(s)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(log_det_pd(SymMatrix(s)) - oracle::dense_log_det(s)) < 1e-10);
  const Matrix v = oracle::random_matrix(6, 2, rng);
  const SymMatrix low(v * v.transpose());
  const Matrix pinv = pseudo_inverse(low).mat();
  CHECK((low.mat() * pinv * low.mat() - low.mat()).cwiseAbs().maxCoeff() < 1e-10);
}

#pragma once

// Reference implementations for the tests: explicit loops, LU factorizations
// and bordered KKT systems instead of the library's code paths.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> z(0.0, sd);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  }
  return m;
}

inline Matrix random_spd(Index n, std::mt19937_64& rng, double ridge = 0.5) {
  const Matrix a = random_matrix(n, n, rng);
  Matrix s = a * a.transpose() / static_cast<double>(n);
  s.diagonal().array() += ridge;
  return 0.5 * (s + s.transpose());
}

inline Vector random_positive(Index n, std::mt19937_64& rng, double lo = 0.3, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline double dense_log_det(const Matrix& a) {
  Eigen::PartialPivLU<Matrix> lu(a);
  const Matrix u = lu.matrixLU();
  double s = 0.0;
  for (Index i = 0; i < a.rows(); ++i) s += std::log(std::abs(u(i, i)));
  return s;
}

inline Matrix dense_inverse(const Matrix& a) { return Eigen::FullPivLU<Matrix>(a).inverse(); }

/// log|det(Sigma)| + tr(S Sigma^{-1}) with an LU factorization.
inline double gaussian_likelihood(const Matrix& sigma, const Matrix& s) {
  return dense_log_det(sigma) + (s * dense_inverse(sigma)).trace();
}

inline double sum_squares(const Matrix& a) {
  double s = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  }
  return s;
}

inline double sum_abs(const Matrix& a) {
  double s = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) s += std::abs(a(i, j));
  }
  return s;
}

/// Double-loop covariance with divisor T.
inline Matrix loop_covariance(const Matrix& x) {
  const Index t = x.rows(), n = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < t; ++i) mean[j] += x(i, j);
    mean[j] /= static_cast<double>(t);
  }
  Matrix c(n, n);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      double s = 0.0;
      for (Index i = 0; i < t; ++i) s += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
      c(a, b) = s / static_cast<double>(t);
    }
  }
  return c;
}

/// Sigma^{-1/2} via eigen-roots of a self-adjoint solver.
inline Matrix inverse_root(const Matrix& sigma) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

/// min w' Sigma w s.t. 1'w = 1 through the bordered KKT system.
inline Vector kkt_gmvp(const Matrix& sigma) {
  const Index n = sigma.rows();
  Matrix k = Matrix::Zero(n + 1, n + 1);
  k.topLeftCorner(n, n) = 2.0 * sigma;
  k.block(0, n, n, 1).setOnes();
  k.block(n, 0, 1, n).setOnes();
  Vector rhs = Vector::Zero(n + 1);
  rhs(n) = 1.0;
  const Vector sol = Eigen::FullPivLU<Matrix>(k).solve(rhs);
  return sol.head(n);
}

/// OLS coefficients (intercept first) of y on [1, X] from the normal equations.
inline Vector normal_equations(const Matrix& x, const Vector& y) {
  Matrix z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  const Matrix ztz = z.transpose() * z;
  return Eigen::FullPivLU<Matrix>(ztz).solve(z.transpose() * y);
}

inline double sample_sd(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace oracle

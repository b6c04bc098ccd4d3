#pragma once

#include <Eigen/Dense>

#include "safcov/errors.hpp"

namespace safcov {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense symmetric matrix. Any input is symmetrized as (A + A^T) / 2 on
/// construction, so entries(i, j) == entries(j, i) holds bit-exactly.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& a);

  static SymMatrix identity(Index n);
  static SymMatrix diagonal(const Vector& d);

  Index dim() const { return a_.rows(); }
  const Matrix& mat() const { return a_; }
  double operator()(Index i, Index j) const { return a_(i, j); }
  Vector diag() const { return a_.diagonal(); }

 private:
  Matrix a_;
};

/// Eigenvalues sorted non-increasing with matching orthonormal columns.
struct EigenPair {
  Vector values;
  Matrix vectors;
};

EigenPair sym_eigen(const SymMatrix& a);
Vector sym_eigenvalues(const SymMatrix& a);

/// sign(x) * max(|x| - tau, 0).
inline double soft_threshold(double x, double tau) {
  const double m = (x < 0 ? -x : x) - tau;
  if (m <= 0.0) return 0.0;
  return x < 0 ? -m : m;
}

double frobenius_norm(const Matrix& a);
inline double frobenius_norm(const SymMatrix& a) { return frobenius_norm(a.mat()); }

/// Largest singular value; for a symmetric matrix, max |eigenvalue|.
double spectral_norm(const SymMatrix& a);
double spectral_norm(const Matrix& a);

/// N^{-1/2} || Sigma^{-1/2} A Sigma^{-1/2} ||_F.
double weighted_quadratic_norm(const SymMatrix& a, const SymMatrix& sigma);

/// Relative positive-definiteness test:
/// min eigenvalue > 1e-12 * max(1, max eigenvalue).
bool is_positive_definite(const SymMatrix& a);
void require_positive_definite(const SymMatrix& a, const char* context);

SymMatrix inverse_sqrt(const SymMatrix& sigma);
SymMatrix inverse_pd(const SymMatrix& a);
SymMatrix pseudo_inverse(const SymMatrix& a);
double log_det_pd(const SymMatrix& a);

/// (Lambda Lambda^T + Sigma_u)^{-1} from Sigma_u^{-1} via the r x r inner solve
/// Sigma_u^{-1} - Sigma_u^{-1} Lambda (I_r + Lambda^T Sigma_u^{-1} Lambda)^{-1}
/// Lambda^T Sigma_u^{-1}.
SymMatrix woodbury_precision(const Matrix& loadings, const SymMatrix& sigma_u_inv);

/// Same identity specialised to a diagonal Sigma_u given by its entries.
SymMatrix woodbury_precision_diag(const Matrix& loadings, const Vector& phi);

/// log det(Lambda Lambda^T + diag(phi)) by the matrix determinant lemma.
double log_det_low_rank_diag(const Matrix& loadings, const Vector& phi);

/// (1/T) sum_t (x_t - xbar)(x_t - xbar)^T for a T x N matrix of observations.
SymMatrix sample_covariance(const Matrix& obs);

/// Column-demeaned copy of a T x N matrix.
Matrix demeaned(const Matrix& obs);

}  // namespace safcov

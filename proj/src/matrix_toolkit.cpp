#include "safcov/matrix_toolkit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace safcov {

namespace {

constexpr int kEigenIterationBudget = 30;  // Eigen's per-eigenvalue QR sweep limit

}  // namespace

SymMatrix::SymMatrix(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw DegenerateInput("SymMatrix requires a non-empty square matrix, got " +
                          std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  a_ = 0.5 * (a + a.transpose());
}

SymMatrix SymMatrix::identity(Index n) { return SymMatrix(Matrix::Identity(n, n)); }

SymMatrix SymMatrix::diagonal(const Vector& d) {
  return SymMatrix(Matrix(d.asDiagonal()));
}

EigenPair sym_eigen(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.mat());
  if (solver.info() != Eigen::Success) {
    throw EigenFailure("symmetric eigensolver did not converge", kEigenIterationBudget);
  }
  EigenPair out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

Vector sym_eigenvalues(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.mat(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw EigenFailure("symmetric eigensolver did not converge", kEigenIterationBudget);
  }
  return solver.eigenvalues().reverse();
}

double frobenius_norm(const Matrix& a) { return std::sqrt(a.cwiseAbs2().sum()); }

double spectral_norm(const SymMatrix& a) {
  const Vector ev = sym_eigenvalues(a);
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  // Work with the smaller Gram matrix.
  const Matrix gram = a.rows() >= a.cols() ? Matrix(a.transpose() * a) : Matrix(a * a.transpose());
  const Vector ev = sym_eigenvalues(SymMatrix(gram));
  return std::sqrt(std::max(ev(0), 0.0));
}

bool is_positive_definite(const SymMatrix& a) {
  const Vector ev = sym_eigenvalues(a);
  const double top = ev(0);
  const double bottom = ev(ev.size() - 1);
  return bottom > 1e-12 * std::max(1.0, top);
}

void require_positive_definite(const SymMatrix& a, const char* context) {
  if (!is_positive_definite(a)) {
    throw NotPositiveDefinite(std::string(context) + ": matrix is not positive definite");
  }
}

SymMatrix inverse_sqrt(const SymMatrix& sigma) {
  const EigenPair ep = sym_eigen(sigma);
  const double bottom = ep.values(ep.values.size() - 1);
  if (!(bottom > 1e-12)) {
    throw NotPositiveDefinite("inverse_sqrt: minimum eigenvalue " + std::to_string(bottom) +
                              " <= 1e-12");
  }
  const Vector root = ep.values.cwiseSqrt().cwiseInverse();
  return SymMatrix(ep.vectors * root.asDiagonal() * ep.vectors.transpose());
}

double weighted_quadratic_norm(const SymMatrix& a, const SymMatrix& sigma) {
  const SymMatrix w = inverse_sqrt(sigma);
  const Matrix core = w.mat() * a.mat() * w.mat();
  return frobenius_norm(core) / std::sqrt(static_cast<double>(a.dim()));
}

SymMatrix inverse_pd(const SymMatrix& a) {
  Eigen::LLT<Matrix> llt(a.mat());
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("inverse_pd: Cholesky factorisation failed");
  }
  return SymMatrix(llt.solve(Matrix::Identity(a.dim(), a.dim())));
}

SymMatrix pseudo_inverse(const SymMatrix& a) {
  const EigenPair ep = sym_eigen(a);
  const double cutoff =
      std::max(std::abs(ep.values(0)), 1.0) * 1e-10 * static_cast<double>(a.dim());
  Vector inv = Vector::Zero(ep.values.size());
  for (Index i = 0; i < ep.values.size(); ++i) {
    if (std::abs(ep.values(i)) > cutoff) inv(i) = 1.0 / ep.values(i);
  }
  return SymMatrix(ep.vectors * inv.asDiagonal() * ep.vectors.transpose());
}

double log_det_pd(const SymMatrix& a) {
  Eigen::LLT<Matrix> llt(a.mat());
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("log_det_pd: Cholesky factorisation failed");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

SymMatrix woodbury_precision(const Matrix& loadings, const SymMatrix& sigma_u_inv) {
  const Index n = sigma_u_inv.dim();
  if (loadings.rows() != n) {
    throw DegenerateInput("woodbury_precision: loadings rows do not match Sigma_u");
  }
  const Index r = loadings.cols();
  if (r == 0) return sigma_u_inv;
  const Matrix w = sigma_u_inv.mat() * loadings;  // N x r
  Matrix inner = Matrix::Identity(r, r) + loadings.transpose() * w;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::LLT<Matrix> llt(inner);
  if (llt.info() != Eigen::Success) {
    throw SingularInnerSystem("woodbury_precision: I + L' S^-1 L is singular");
  }
  return SymMatrix(sigma_u_inv.mat() - w * llt.solve(w.transpose()));
}

SymMatrix woodbury_precision_diag(const Matrix& loadings, const Vector& phi) {
  if ((phi.array() <= 0.0).any()) {
    throw NotPositiveDefinite("woodbury_precision_diag: diagonal entries must be positive");
  }
  const Index r = loadings.cols();
  const Vector phi_inv = phi.cwiseInverse();
  Matrix out = Matrix(phi_inv.asDiagonal());
  if (r == 0) return SymMatrix(out);
  const Matrix w = phi_inv.asDiagonal() * loadings;
  Matrix inner = Matrix::Identity(r, r) + loadings.transpose() * w;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::LLT<Matrix> llt(inner);
  if (llt.info() != Eigen::Success) {
    throw SingularInnerSystem("woodbury_precision_diag: inner system is singular");
  }
  out.noalias() -= w * llt.solve(w.transpose());
  return SymMatrix(out);
}

double log_det_low_rank_diag(const Matrix& loadings, const Vector& phi) {
  if ((phi.array() <= 0.0).any()) {
    throw NotPositiveDefinite("log_det_low_rank_diag: diagonal entries must be positive");
  }
  double value = phi.array().log().sum();
  const Index r = loadings.cols();
  if (r == 0) return value;
  const Matrix w = phi.cwiseInverse().asDiagonal() * loadings;
  Matrix inner = Matrix::Identity(r, r) + loadings.transpose() * w;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::LLT<Matrix> llt(inner);
  if (llt.info() != Eigen::Success) {
    throw SingularInnerSystem("log_det_low_rank_diag: inner system is singular");
  }
  value += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return value;
}

Matrix demeaned(const Matrix& obs) {
  const Eigen::RowVectorXd mean = obs.colwise().mean();
  return obs.rowwise() - mean;
}

SymMatrix sample_covariance(const Matrix& obs) {
  if (obs.rows() < 1 || obs.cols() < 1) {
    throw InsufficientDimensions("sample_covariance: empty panel");
  }
  const Matrix x = demeaned(obs);
  return SymMatrix((x.transpose() * x) / static_cast<double>(obs.rows()));
}

}  // namespace safcov

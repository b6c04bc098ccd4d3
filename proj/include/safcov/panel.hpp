#pragma once

#include <string>
#include <vector>

#include "safcov/matrix_toolkit.hpp"

namespace safcov {

/// T x N block of observations (rows are dates, columns are assets) with labels.
///
/// When `standardized` is set, `obs` holds (x - mean) / scale per column and
/// `mean` / `scale` keep what is needed to map a covariance estimate back to
/// the original units: Sigma_raw = D Sigma_std D with D = diag(scale).
struct ReturnPanel {
  Matrix obs;
  std::vector<std::string> dates;
  std::vector<std::string> assets;
  Vector mean;
  Vector scale;
  bool standardized = false;

  Index n_assets() const { return obs.cols(); }
  Index n_periods() const { return obs.rows(); }
};

/// Wraps a raw matrix with generated labels ("A1".., "t1"..).
ReturnPanel make_panel(Matrix obs);

/// Demeans every column and scales it to unit variance (1/T divisor).
/// Throws DegenerateInput if a column has zero variance.
ReturnPanel standardize(const ReturnPanel& raw);

/// Demeans every column without rescaling; scale is set to ones.
ReturnPanel demean(const ReturnPanel& raw);

/// D Sigma D for the panel's stored scale factors.
SymMatrix rescale_covariance(const SymMatrix& sigma_std, const Vector& scale);

/// Panel restricted to the given asset columns and [row_begin, row_end) rows.
ReturnPanel slice(const ReturnPanel& panel, const std::vector<Index>& columns, Index row_begin,
                  Index row_end);

/// Throws DegenerateInput naming the first column with zero sample variance.
void require_nondegenerate_columns(const Matrix& obs, const char* context);

}  // namespace safcov

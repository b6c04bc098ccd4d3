#include "safcov/panel.hpp"

#include <cmath>
#include <string>

namespace safcov {

ReturnPanel make_panel(Matrix obs) {
  ReturnPanel p;
  p.obs = std::move(obs);
  p.assets.reserve(static_cast<std::size_t>(p.obs.cols()));
  for (Index j = 0; j < p.obs.cols(); ++j) p.assets.push_back("A" + std::to_string(j + 1));
  p.dates.reserve(static_cast<std::size_t>(p.obs.rows()));
  for (Index t = 0; t < p.obs.rows(); ++t) p.dates.push_back("t" + std::to_string(t + 1));
  p.mean = Vector::Zero(p.obs.cols());
  p.scale = Vector::Ones(p.obs.cols());
  return p;
}

void require_nondegenerate_columns(const Matrix& obs, const char* context) {
  const Matrix x = demeaned(obs);
  for (Index j = 0; j < x.cols(); ++j) {
    const double ss = x.col(j).squaredNorm();
    if (!(ss > 0.0) || !std::isfinite(ss)) {
      throw DegenerateInput(std::string(context) + ": column " + std::to_string(j) +
                            " has zero or non-finite variance");
    }
  }
}

ReturnPanel standardize(const ReturnPanel& raw) {
  require_nondegenerate_columns(raw.obs, "standardize");
  ReturnPanel out = raw;
  const double t = static_cast<double>(raw.obs.rows());
  out.mean = raw.obs.colwise().mean().transpose();
  Matrix x = raw.obs.rowwise() - out.mean.transpose();
  out.scale = (x.colwise().squaredNorm().array() / t).sqrt().transpose();
  for (Index j = 0; j < x.cols(); ++j) x.col(j) /= out.scale(j);
  out.obs = std::move(x);
  out.standardized = true;
  return out;
}

ReturnPanel demean(const ReturnPanel& raw) {
  ReturnPanel out = raw;
  out.mean = raw.obs.colwise().mean().transpose();
  out.obs = raw.obs.rowwise() - out.mean.transpose();
  out.scale = Vector::Ones(raw.obs.cols());
  out.standardized = false;
  return out;
}

SymMatrix rescale_covariance(const SymMatrix& sigma_std, const Vector& scale) {
  return SymMatrix(scale.asDiagonal() * sigma_std.mat() * scale.asDiagonal());
}

ReturnPanel slice(const ReturnPanel& panel, const std::vector<Index>& columns, Index row_begin,
                  Index row_end) {
  ReturnPanel out;
  const Index rows = row_end - row_begin;
  out.obs.resize(rows, static_cast<Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.obs.col(static_cast<Index>(c)) = panel.obs.col(columns[c]).segment(row_begin, rows);
    out.assets.push_back(panel.assets[static_cast<std::size_t>(columns[c])]);
  }
  for (Index t = row_begin; t < row_end; ++t) {
    out.dates.push_back(panel.dates[static_cast<std::size_t>(t)]);
  }
  out.mean = Vector::Zero(out.obs.cols());
  out.scale = Vector::Ones(out.obs.cols());
  return out;
}

}  // namespace safcov

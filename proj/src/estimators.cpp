#include "safcov/estimators.hpp"

#include <algorithm>
#include <array>

#include "safcov/panel.hpp"
#include "safcov/rivals.hpp"

namespace safcov {

namespace {

struct NamedId {
  std::string_view name;
  EstimatorId id;
};

constexpr std::array<NamedId, 11> kNames{{{"sample", EstimatorId::Sample},
                                          {"1/n", EstimatorId::EqualWeight},
                                          {"saf", EstimatorId::Saf},
                                          {"lw", EstimatorId::Lw},
                                          {"kdm", EstimatorId::Kdm},
                                          {"adz", EstimatorId::Adz},
                                          {"st", EstimatorId::St},
                                          {"bt", EstimatorId::Bt},
                                          {"sim", EstimatorId::Sim},
                                          {"ff3f", EstimatorId::Ff3f},
                                          {"oracle", EstimatorId::Oracle}}};

}  // namespace

std::string_view to_string(EstimatorId id) {
  for (const auto& n : kNames) {
    if (n.id == id) return n.name;
  }
  return "unknown";
}

std::optional<EstimatorId> parse_estimator_id(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "ew") return EstimatorId::EqualWeight;
  for (const auto& n : kNames) {
    if (n.name == lower) return n.id;
  }
  return std::nullopt;
}

const std::vector<EstimatorId>& all_estimator_ids() {
  static const std::vector<EstimatorId> ids = [] {
    std::vector<EstimatorId> v;
    for (const auto& n : kNames) v.push_back(n.id);
    return v;
  }();
  return ids;
}

SafPipelineResult estimate_saf(const Matrix& obs, const SafPipelineOptions& options) {
  const ReturnPanel panel = standardize(make_panel(obs));
  SafPipelineResult out;
  if (options.r) {
    out.r = *options.r;
  } else {
    const Index room = std::min(panel.n_assets(), panel.n_periods()) - 6;
    const int r_max = static_cast<int>(std::min<Index>(options.r_max, room));
    out.r = 1;
    if (r_max >= 1) {
      out.factor_count = select_num_factors(panel, r_max);
      out.r = std::max(1, out.factor_count->r_hat);
    }
  }
  if (options.mu) {
    SafConfig cfg = options.mu_options.base;
    cfg.r = out.r;
    cfg.mu = *options.mu;
    out.fit = fit_saf(panel, cfg);
  } else {
    out.mu_selection = select_mu(panel, out.r, options.mu_options);
    out.fit = out.mu_selection->best_fit;
  }
  CovarianceEstimate std_est = assemble_saf_covariance(out.fit);
  out.estimate = std_est;
  out.estimate.matrix = rescale_covariance(std_est.matrix, panel.scale);
  out.estimate.positive_definite = is_positive_definite(out.estimate.matrix);
  if (out.factor_count) out.estimate.params["r_hat"] = out.factor_count->r_hat;
  if (out.mu_selection) out.estimate.params["mu_max"] = out.mu_selection->mu_max;
  return out;
}

CovarianceEstimate run_estimator(EstimatorId id, const Matrix& obs, const EstimatorContext& ctx) {
  auto market = [&]() -> Vector {
    if (ctx.factors && ctx.factors->cols() >= 1) return ctx.factors->col(0);
    return market_proxy(obs);
  };
  switch (id) {
    case EstimatorId::Sample:
      return sample_cov(obs);
    case EstimatorId::EqualWeight: {
      CovarianceEstimate e;
      e.matrix = SymMatrix::identity(obs.cols());
      e.estimator_id = id;
      e.positive_definite = true;
      return e;
    }
    case EstimatorId::Saf:
      return estimate_saf(obs, ctx.saf).estimate;
    case EstimatorId::Lw:
      return lw_shrinkage(obs, market()).estimate;
    case EstimatorId::Kdm: {
      KdmResult k = kdm_precision(obs, market());
      CovarianceEstimate e;
      e.matrix = k.precision;
      e.is_precision = true;
      e.estimator_id = id;
      e.positive_definite = k.positive_definite;
      e.params["zeta1"] = k.zeta[0];
      e.params["zeta2"] = k.zeta[1];
      e.params["zeta3"] = k.zeta[2];
      return e;
    }
    case EstimatorId::Adz:
      return adz_design_free(obs, obs.rows() / 2);
    case EstimatorId::St: {
      StOptions o;
      o.seed = ctx.seed;
      return st_threshold_cov(obs, o).estimate;
    }
    case EstimatorId::Bt:
      return bt_sparse_cov(obs).estimate;
    case EstimatorId::Sim:
      return sim_cov(obs, market());
    case EstimatorId::Ff3f:
      if (!ctx.factors || ctx.factors->cols() < 3) {
        throw DegenerateInput("ff3f: three observed factors are required");
      }
      return ff3f_cov(obs, ctx.factors->leftCols(3));
    case EstimatorId::Oracle: {
      if (!ctx.truth) throw DegenerateInput("oracle: no true covariance available");
      CovarianceEstimate e;
      e.matrix = *ctx.truth;
      e.estimator_id = id;
      e.positive_definite = is_positive_definite(e.matrix);
      return e;
    }
  }
  throw DegenerateInput("run_estimator: unknown estimator");
}

SymMatrix covariance_of(const CovarianceEstimate& e) {
  if (!e.is_precision) return e.matrix;
  if (is_positive_definite(e.matrix)) return inverse_pd(e.matrix);
  return pseudo_inverse(e.matrix);
}

}  // namespace safcov

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "safcov/csv_io.hpp"
#include "safcov/estimators.hpp"
#include "safcov/model_selection.hpp"
#include "safcov/parallel.hpp"
#include "safcov/portfolio.hpp"
#include "safcov/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace safcov;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

/// Flag combinations CLI11 cannot express; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_output_dir() {
  const char* env = std::getenv("SAFCOV_OUTPUT_DIR");
  return env && *env ? env : "safcov_out";
}

std::vector<EstimatorId> parse_estimators(const std::vector<std::string>& names) {
  std::vector<EstimatorId> out;
  for (const auto& n : names) {
    const auto id = parse_estimator_id(n);
    if (!id) throw UsageError("unknown estimator '" + n + "'");
    out.push_back(*id);
  }
  if (out.empty()) throw UsageError("no estimators given");
  return out;
}

json estimator_names(const std::vector<EstimatorId>& ids) {
  json j = json::array();
  for (auto id : ids) j.push_back(std::string(to_string(id)));
  return j;
}

std::string csv_opt(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::string scree_csv(const Vector& eigenvalues) {
  std::ostringstream out;
  out << "k,eigenvalue\n";
  for (Index k = 0; k < eigenvalues.size(); ++k) out << k + 1 << ',' << format_double(eigenvalues(k)) << '\n';
  return out.str();
}

struct Output {
  std::string dir;
  RunManifest manifest;

  void write(const std::string& name, const std::string& content) {
    const std::string path = (fs::path(dir) / name).string();
    write_text(path, content);
    manifest.outputs.push_back(name);
  }
  void finish(std::chrono::steady_clock::time_point start) {
    manifest.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest((fs::path(dir) / "manifest.json").string(), manifest);
  }
};

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string design = "uniform";
  Index n = 30;
  Index t = 60;
  double eta = 0.025;
  double p = 0.1;
  int reps = 100;
  std::uint64_t seed = 1;
  std::vector<std::string> estimators{"saf", "sample", "st"};
  std::string dist = "gaussian";
  std::string scale = "covariance";
  bool redraw = false;
};

void cmd_simulate(const SimulateArgs& a, int jobs, Output& out) {
  StudyConfig cfg;
  cfg.design.kind = parse_design_kind(a.design);
  cfg.design.n = a.n;
  cfg.design.t = a.t;
  cfg.design.eta = a.eta;
  cfg.design.p = a.p;
  cfg.design.seed = a.seed;
  cfg.estimators = parse_estimators(a.estimators);
  cfg.reps = a.reps;
  if (a.dist == "gaussian") {
    cfg.dist = Distribution::Gaussian;
  } else if (a.dist == "t5") {
    cfg.dist = Distribution::StudentT5;
  } else {
    throw UsageError("--dist must be gaussian or t5");
  }
  cfg.scale = parse_loss_scale(a.scale);
  cfg.redraw_sigma = a.redraw;
  cfg.jobs = jobs;

  out.manifest.command = "simulate";
  out.manifest.seed = a.seed;
  out.manifest.config = {{"design", a.design}, {"N", a.n},       {"T", a.t},
                         {"eta", a.eta},       {"p", a.p},       {"reps", a.reps},
                         {"seed", a.seed},     {"dist", a.dist}, {"scale", a.scale},
                         {"redraw_sigma", a.redraw},             {"jobs", jobs},
                         {"estimators", estimator_names(cfg.estimators)}};

  const StudyResult res = run_study(cfg);

  std::ostringstream summary;
  summary << "estimator,n_ok,n_failed,mean_frobenius,median_frobenius,se_frobenius,mean_spectral,"
             "mean_weighted\n";
  for (const auto& s : res.summary) {
    summary << to_string(s.estimator) << ',' << s.n_ok << ',' << s.n_failed << ','
            << format_double(s.mean) << ',' << format_double(s.median) << ','
            << format_double(s.stderr_) << ',' << format_double(s.mean_spectral) << ','
            << format_double(s.mean_weighted) << '\n';
  }
  out.write("summary.csv", summary.str());

  std::ostringstream reps;
  reps << "rep,estimator,ok,frobenius,spectral,weighted\n";
  for (const auto& sc : res.scores) {
    reps << sc.rep << ',' << to_string(sc.estimator) << ',' << (sc.ok ? 1 : 0) << ','
         << format_double(sc.frobenius_loss) << ',' << format_double(sc.spectral_loss) << ','
         << format_double(sc.weighted_loss) << '\n';
    if (!sc.ok) {
      out.manifest.errors.push_back("rep " + std::to_string(sc.rep) + " " +
                                    std::string(to_string(sc.estimator)) + ": " + sc.error);
    }
  }
  out.write("replications.csv", reps.str());

  // Scree data for the true covariance and the first replication's panel.
  const ReturnPanel panel = draw_panel(res.sigma, a.t, stream_seed(stream_seed(a.seed, 0), 2), cfg.dist);
  const Vector truth = sym_eigenvalues(res.sigma);
  const Vector sample = sym_eigenvalues(sample_covariance(panel.obs));
  std::ostringstream scree;
  scree << "k,truth,sample\n";
  for (Index k = 0; k < truth.size(); ++k) {
    scree << k + 1 << ',' << format_double(truth(k)) << ',' << format_double(sample(k)) << '\n';
  }
  out.write("scree.csv", scree.str());

  for (const auto& s : res.summary) {
    std::cout << to_string(s.estimator) << "\tmean " << s.mean << "\tmedian " << s.median << "\t("
              << s.n_ok << " ok, " << s.n_failed << " failed)\n";
  }
}

// ---- estimate -------------------------------------------------------------

struct EstimateArgs {
  std::string input;
  std::string estimator = "saf";
  std::string factors;
  bool select_r = false;
  bool select_mu = false;
  std::optional<int> r;
  std::optional<double> mu;
  int r_max = 8;
  std::uint64_t seed = 1;
};

void cmd_estimate(const EstimateArgs& a, Output& out) {
  const auto ids = parse_estimators({a.estimator});
  const EstimatorId id = ids.front();
  if (id == EstimatorId::Oracle) throw UsageError("the oracle estimator needs a known covariance");
  if (id == EstimatorId::Saf) {
    if (a.select_r == a.r.has_value()) throw UsageError("saf needs exactly one of --select-r and --r");
    if (a.select_mu == a.mu.has_value()) throw UsageError("saf needs exactly one of --select-mu and --mu");
  }
  out.manifest.command = "estimate";
  out.manifest.seed = a.seed;
  out.manifest.config = {{"input", a.input},         {"estimator", a.estimator},
                         {"factors", a.factors},     {"select_r", a.select_r},
                         {"select_mu", a.select_mu}, {"r", a.r ? json(*a.r) : json()},
                         {"mu", a.mu ? json(*a.mu) : json()},
                         {"r_max", a.r_max},         {"seed", a.seed}};

  const ReturnPanel panel = load_panel(a.input, false);
  if (!panel.obs.allFinite()) throw DegenerateInput(a.input + ": missing cells are not allowed here");
  EstimatorContext ctx;
  ctx.seed = a.seed;
  ctx.saf.r_max = a.r_max;
  ctx.saf.r = a.r;
  ctx.saf.mu = a.mu;
  ObservedFactors factors;
  if (!a.factors.empty()) {
    factors = load_factors(a.factors, panel.dates);
    if (!factors.series.allFinite()) throw DegenerateInput(a.factors + ": factor dates do not cover the panel");
    ctx.factors = &factors.series;
  }

  CovarianceEstimate est;
  json chosen = json::object();
  if (id == EstimatorId::Saf) {
    const SafPipelineResult res = estimate_saf(panel.obs, ctx.saf);
    est = res.estimate;
    chosen["r"] = res.r;
    chosen["mu"] = res.fit.mu;
    chosen["effective_r"] = res.fit.effective_r;
    chosen["converged"] = res.fit.converged;
    if (res.factor_count) chosen["r_hat"] = res.factor_count->r_hat;
    if (res.mu_selection) {
      chosen["mu_max"] = res.mu_selection->mu_max;
      for (const auto& w : res.mu_selection->warnings) out.manifest.errors.push_back(w);
    }
  } else {
    est = run_estimator(id, panel.obs, ctx);
  }
  for (const auto& [k, v] : est.params) chosen[k] = v;
  out.manifest.config["chosen"] = chosen;

  const std::string name = est.is_precision ? "precision.csv" : "covariance.csv";
  write_covariance((fs::path(out.dir) / name).string(), est, panel.assets);
  out.manifest.outputs.push_back(name);
  out.manifest.outputs.push_back(name + ".json");
  out.write("scree.csv", scree_csv(sym_eigenvalues(sample_covariance(standardize(panel).obs))));
  std::cout << "wrote " << (fs::path(out.dir) / name).string() << " (" << chosen.dump() << ")\n";
}

// ---- select ---------------------------------------------------------------

struct SelectArgs {
  std::string input;
  int r_max = 8;
  std::optional<int> r;
  int grid_size = 30;
};

void cmd_select(const SelectArgs& a, Output& out) {
  out.manifest.command = "select";
  out.manifest.config = {{"input", a.input},
                         {"r_max", a.r_max},
                         {"r", a.r ? json(*a.r) : json()},
                         {"grid_size", a.grid_size}};
  const ReturnPanel panel = standardize(load_panel(a.input, false));
  const Index cap = std::min(panel.n_assets(), panel.n_periods()) - 6;
  const int r_max = static_cast<int>(std::min<Index>(a.r_max, cap));
  if (r_max < 1) throw InsufficientDimensions("select: panel too small for the factor count (need min(N, T) >= 7)");
  const FactorCountResult fc = select_num_factors(panel, r_max);
  const int r = a.r ? *a.r : std::max(1, fc.r_hat);

  MuSelectionOptions opts;
  opts.grid_size = a.grid_size;
  const MuSelection ms = select_mu(panel, r, opts);
  for (const auto& w : ms.warnings) out.manifest.errors.push_back(w);

  std::ostringstream path;
  path << "mu,ic,kappa,excluded,selected\n";
  for (std::size_t i = 0; i < ms.grid.size(); ++i) {
    path << format_double(ms.grid[i]) << ',' << format_double(ms.ic_values[i]) << ','
         << ms.kappa_per_mu[i] << ',' << (ms.excluded[i] ? 1 : 0) << ','
         << (i == ms.star_index ? 1 : 0) << '\n';
  }
  out.write("mu_path.csv", path.str());
  out.write("scree.csv", scree_csv(fc.eigenvalues));

  json sel = {{"r_hat", fc.r_hat},   {"xi", fc.xi},       {"r_used", r},
              {"mu_max", ms.mu_max}, {"mu_star", ms.mu_star},
              {"kappa_star", ms.kappa_per_mu.empty() ? 0 : ms.kappa_per_mu[ms.star_index]},
              {"degenerate", ms.degenerate}};
  out.manifest.config["chosen"] = sel;
  out.write("selection.json", sel.dump(2) + "\n");
  std::cout << sel.dump() << "\n";
}

// ---- backtest -------------------------------------------------------------

struct BacktestArgs {
  std::string input;
  std::string riskfree;
  std::string factors;
  Index window = 60;
  std::vector<Index> sizes{30};
  int repeats = 100;
  std::uint64_t seed = 1;
  std::vector<std::string> estimators{"1/n", "sample", "saf"};
  double gamma = 1.0;
  int periods = 12;
};

void cmd_backtest(const BacktestArgs& a, int jobs, Output& out) {
  BacktestConfig cfg;
  cfg.window_h = a.window;
  cfg.subset_sizes = a.sizes;
  cfg.n_repeats = a.repeats;
  cfg.seed = a.seed;
  cfg.estimators = parse_estimators(a.estimators);
  cfg.metrics.gamma = a.gamma;
  cfg.metrics.periods = a.periods;
  cfg.jobs = jobs;
  out.manifest.command = "backtest";
  out.manifest.seed = a.seed;
  // jobs is left out of the echo so outputs stay identical across worker counts.
  out.manifest.config = {{"input", a.input},     {"riskfree", a.riskfree},
                         {"factors", a.factors}, {"window", a.window},
                         {"sizes", a.sizes},     {"repeats", a.repeats},
                         {"seed", a.seed},       {"gamma", a.gamma},
                         {"periods", a.periods}, {"estimators", estimator_names(cfg.estimators)}};

  const ReturnPanel panel = load_panel(a.input, false);
  Vector rf;
  if (!a.riskfree.empty()) rf = load_riskfree(a.riskfree, panel.dates);
  ObservedFactors factors;
  if (!a.factors.empty()) factors = load_factors(a.factors, panel.dates);
  const BacktestReport rep = run_backtest(panel, a.riskfree.empty() ? nullptr : &rf,
                                          a.factors.empty() ? nullptr : &factors, cfg);
  out.manifest.errors = rep.log;

  std::ostringstream summary;
  summary << "estimator,size,n_ok,n_failed,sd,av,sr,ce,w_min,w_max,w_sd,w_mad\n";
  for (const auto& g : rep.aggregates) {
    summary << to_string(g.estimator) << ',' << g.subset_size << ',' << g.n_ok << ',' << g.n_failed << ','
            << format_double(g.sd) << ',' << format_double(g.av) << ',' << csv_opt(g.sr) << ','
            << format_double(g.ce) << ',' << format_double(g.weights.min) << ','
            << format_double(g.weights.max) << ',' << format_double(g.weights.sd) << ','
            << format_double(g.weights.mad) << '\n';
  }
  out.write("summary.csv", summary.str());

  std::ostringstream cells;
  cells << "estimator,size,repeat,ok,sd,av,sr,ce,max_weight_sum_error,error\n";
  for (const auto& c : rep.cells) {
    cells << to_string(c.estimator) << ',' << c.subset_size << ',' << c.repeat << ',' << (c.ok ? 1 : 0) << ',';
    if (c.ok) {
      cells << format_double(c.metrics.sd) << ',' << format_double(c.metrics.av) << ','
            << csv_opt(c.metrics.sr) << ',' << format_double(c.metrics.ce) << ','
            << format_double(c.max_abs_weight_sum_error) << ",\n";
    } else {
      std::string msg = c.error;
      for (char& ch : msg) {
        if (ch == '"') ch = '\'';
      }
      cells << "NA,NA,NA,NA,NA,\"" << msg << "\"\n";
    }
  }
  out.write("cells.csv", cells.str());

  std::ostringstream returns;
  returns << "date";
  for (const auto& c : rep.cells) {
    returns << ',' << to_string(c.estimator) << '_' << c.subset_size << '_' << c.repeat;
  }
  returns << '\n';
  for (std::size_t t = 0; t < rep.dates.size(); ++t) {
    returns << rep.dates[t];
    for (const auto& c : rep.cells) returns << ',' << (c.ok ? format_double(c.returns[t]) : "NA");
    returns << '\n';
  }
  out.write("returns.csv", returns.str());

  // Expanding SD starts at the third out-of-sample return (needs two for a variance).
  std::ostringstream sd;
  sd << "estimator,size,date,sd\n";
  for (const auto& g : rep.aggregates) {
    for (std::size_t i = 0; i < g.expanding_sd.size(); ++i) {
      sd << to_string(g.estimator) << ',' << g.subset_size << ',' << rep.dates[i + 2] << ','
         << format_double(g.expanding_sd[i]) << '\n';
    }
  }
  out.write("expanding_sd.csv", sd.str());

  for (const auto& g : rep.aggregates) {
    std::cout << to_string(g.estimator) << "\tN=" << g.subset_size << "\tSD " << g.sd << "\tAV " << g.av
              << "\tSR " << csv_opt(g.sr) << "\tCE " << g.ce << "\n";
  }
}

std::string error_kind(const std::exception& ex) {
  if (dynamic_cast<const NonNumericCell*>(&ex)) return "NonNumericCell";
  if (dynamic_cast<const DuplicateDate*>(&ex)) return "DuplicateDate";
  if (dynamic_cast<const ParseError*>(&ex)) return "ParseError";
  if (dynamic_cast<const NotPositiveDefinite*>(&ex)) return "NotPositiveDefinite";
  if (dynamic_cast<const SingularInnerSystem*>(&ex)) return "SingularInnerSystem";
  if (dynamic_cast<const DegenerateInput*>(&ex)) return "DegenerateInput";
  if (dynamic_cast<const InsufficientDimensions*>(&ex)) return "InsufficientDimensions";
  if (dynamic_cast<const NumericalBreakdown*>(&ex)) return "NumericalBreakdown";
  if (dynamic_cast<const NonConvergence*>(&ex)) return "NonConvergence";
  if (dynamic_cast<const EigenFailure*>(&ex)) return "EigenFailure";
  return "Error";
}

void report_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safcov: sparse approximate factor covariance toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kLibraryVersion));

  std::string out_dir = default_output_dir();
  int jobs = 1;
  app.add_option("--out,-o", out_dir, "output directory (default $SAFCOV_OUTPUT_DIR or ./safcov_out)")
      ->capture_default_str();
  app.add_option("--jobs,-j", jobs, "worker threads; 0 uses every core")->check(CLI::NonNegativeNumber);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo loss study on a synthetic design");
  simulate->add_option("--design", sim.design, "uniform, sparse or spiked")
      ->check(CLI::IsMember({"uniform", "sparse", "spiked"}))
      ->capture_default_str();
  simulate->add_option("--N", sim.n, "number of series")->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--T", sim.t, "number of periods")->check(CLI::Range(2, 1 << 24))->capture_default_str();
  simulate->add_option("--eta", sim.eta, "uniform design scale")->check(CLI::NonNegativeNumber)->capture_default_str();
  simulate->add_option("--p", sim.p, "sparse design density")->capture_default_str();
  simulate->add_option("--reps", sim.reps, "replications")->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--seed", sim.seed, "base seed")->capture_default_str();
  simulate->add_option("--estimators", sim.estimators, "comma-separated estimator names")->delimiter(',');
  simulate->add_option("--dist", sim.dist, "gaussian or t5")->check(CLI::IsMember({"gaussian", "t5"}));
  simulate->add_option("--scale", sim.scale, "covariance or correlation")
      ->check(CLI::IsMember({"covariance", "correlation"}));
  simulate->add_flag("--redraw-sigma", sim.redraw, "draw a new true covariance per replication");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate a covariance matrix from a return panel");
  estimate->add_option("--input,-i", est.input, "panel CSV (date column, one column per asset)")
      ->required()
      ->check(CLI::ExistingFile);
  estimate->add_option("--estimator,-e", est.estimator, "estimator name")->capture_default_str();
  estimate->add_option("--factors", est.factors, "factor CSV with mkt_rf, smb, hml")->check(CLI::ExistingFile);
  estimate->add_flag("--select-r", est.select_r, "choose r with the eigenvalue-difference criterion");
  estimate->add_flag("--select-mu", est.select_mu, "choose mu with the information criterion");
  estimate->add_option("--r", est.r, "fixed number of factors")->check(CLI::PositiveNumber);
  estimate->add_option("--mu", est.mu, "fixed l1 penalty")->check(CLI::NonNegativeNumber);
  estimate->add_option("--r-max", est.r_max, "largest factor count considered")->capture_default_str();
  estimate->add_option("--seed", est.seed, "seed for cross-validated estimators")->capture_default_str();

  SelectArgs selargs;
  auto* select = app.add_subcommand("select", "Factor count and penalty selection diagnostics");
  select->add_option("--input,-i", selargs.input, "panel CSV")->required()->check(CLI::ExistingFile);
  select->add_option("--r-max", selargs.r_max, "largest factor count considered")->capture_default_str();
  select->add_option("--r", selargs.r, "fix r instead of using the selected count")->check(CLI::PositiveNumber);
  select->add_option("--grid", selargs.grid_size, "mu grid size")->check(CLI::Range(2, 10000))->capture_default_str();

  BacktestArgs bt;
  auto* backtest = app.add_subcommand("backtest", "Rolling-window GMVP backtest");
  backtest->add_option("--input,-i", bt.input, "returns CSV")->required()->check(CLI::ExistingFile);
  backtest->add_option("--riskfree", bt.riskfree, "risk-free CSV (date, rf)")->check(CLI::ExistingFile);
  backtest->add_option("--factors", bt.factors, "factor CSV with mkt_rf, smb, hml")->check(CLI::ExistingFile);
  backtest->add_option("--window", bt.window, "estimation window h")->check(CLI::Range(2, 1 << 24))->capture_default_str();
  backtest->add_option("--sizes", bt.sizes, "comma-separated subset sizes")->delimiter(',');
  backtest->add_option("--repeats", bt.repeats, "random subsets per size")->check(CLI::PositiveNumber)->capture_default_str();
  backtest->add_option("--seed", bt.seed, "base seed")->capture_default_str();
  backtest->add_option("--estimators", bt.estimators, "comma-separated estimator names")->delimiter(',');
  backtest->add_option("--gamma", bt.gamma, "risk aversion for the certainty equivalent")->capture_default_str();
  backtest->add_option("--periods", bt.periods, "periods per year")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (jobs == 0) jobs = default_jobs();

  Output out;
  out.dir = out_dir;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (*simulate) cmd_simulate(sim, jobs, out);
    if (*estimate) cmd_estimate(est, out);
    if (*select) cmd_select(selargs, out);
    if (*backtest) cmd_backtest(bt, jobs, out);
    out.finish(start);
  } catch (const UsageError& e) {
    report_error("UsageError", e.what());
    std::cerr << app.help() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    report_error(error_kind(e), e.what());
    out.manifest.errors.push_back(e.what());
    try {
      out.finish(start);
    } catch (const std::exception&) {
    }
    return kExitDomain;
  } catch (const std::exception& e) {
    report_error("InternalError", e.what());
    return kExitDomain;
  }
  return 0;
}

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "safcov/covariance_estimate.hpp"
#include "safcov/panel.hpp"
#include "safcov/rivals.hpp"

namespace safcov {

/// A CSV whose first column holds dates and whose remaining columns are numeric.
/// Empty, "NA" and "NaN" cells load as quiet NaN.
struct DatedTable {
  std::vector<std::string> dates;
  std::vector<std::string> columns;
  Matrix values;  ///< rows = dates
};

DatedTable read_dated_table(const std::string& path);
DatedTable parse_dated_table(const std::string& text, const std::string& source = "<memory>");

/// Returns panel; with standardize=true every column is demeaned and scaled to
/// unit variance and the scale factors are kept on the panel.
ReturnPanel load_panel(const std::string& path, bool standardize);

/// Writes dates, labels and values with 17 significant digits.
void write_panel(const std::string& path, const ReturnPanel& panel);

/// Risk-free rate aligned to `dates`; throws if a date is missing.
Vector load_riskfree(const std::string& path, const std::vector<std::string>& dates);

/// mkt_rf, smb, hml columns (whichever exist, in that order) aligned to
/// `dates`; dates absent from the file become NaN rows.
ObservedFactors load_factors(const std::string& path, const std::vector<std::string>& dates);

/// Matrix CSV with a label header row and label first column, plus a JSON
/// sidecar at `<path>.json` holding estimator id and params.
void write_covariance(const std::string& path, const CovarianceEstimate& estimate,
                      const std::vector<std::string>& labels);

struct LoadedCovariance {
  std::vector<std::string> labels;
  SymMatrix matrix;
  nlohmann::json metadata;
};

LoadedCovariance read_covariance(const std::string& path);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
  std::vector<std::string> errors;
  std::vector<std::string> outputs;
};

inline constexpr const char* kLibraryVersion = "0.1.0";

void write_manifest(const std::string& path, const RunManifest& manifest);

/// Writes `content` to path, creating parent directories.
void write_text(const std::string& path, const std::string& content);

/// 17 significant digits, enough to read back the same double.
std::string format_double(double v);

}  // namespace safcov

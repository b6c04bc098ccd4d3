#include "safcov/csv_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

namespace safcov {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      cell.push_back(c);
    } else if (c == ',' && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan";
}

const std::regex& date_pattern() {
  static const std::regex re(R"(\d{4}-\d{2}(-\d{2})?)");
  return re;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path, 0, 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

DatedTable parse_dated_table(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  DatedTable table;
  std::vector<std::vector<double>> rows;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_row(line);
    if (table.columns.empty() && rows.empty() && table.dates.empty()) {
      if (cells.size() < 2) throw ParseError(source + ": header needs a date column and data", row, 1);
      table.columns.assign(cells.begin() + 1, cells.end());
      continue;
    }
    if (cells.size() != table.columns.size() + 1) {
      throw ParseError(source + ": expected " + std::to_string(table.columns.size() + 1) +
                           " cells, found " + std::to_string(cells.size()),
                       row, cells.size());
    }
    if (!std::regex_match(cells[0], date_pattern())) {
      throw ParseError(source + ": '" + cells[0] + "' is not an ISO date", row, 1);
    }
    if (!seen.insert(cells[0]).second) {
      throw DuplicateDate(source + ": duplicate date " + cells[0], row, 1);
    }
    std::vector<double> values;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (is_missing(cells[c])) {
        values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size()) {
        throw NonNumericCell(source + ": non-numeric cell '" + cells[c] + "'", row, c + 1);
      }
      values.push_back(v);
    }
    table.dates.push_back(cells[0]);
    rows.push_back(std::move(values));
  }
  if (table.columns.empty()) throw ParseError(source + ": missing header row", 1, 1);
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return table;
}

DatedTable read_dated_table(const std::string& path) { return parse_dated_table(slurp(path), path); }

ReturnPanel load_panel(const std::string& path, bool standardize_columns) {
  DatedTable table = read_dated_table(path);
  if (table.dates.size() < 2) throw InsufficientDimensions(path + ": need at least two rows");
  ReturnPanel panel;
  panel.obs = std::move(table.values);
  panel.dates = std::move(table.dates);
  panel.assets = std::move(table.columns);
  panel.mean = Vector::Zero(panel.obs.cols());
  panel.scale = Vector::Ones(panel.obs.cols());
  if (!standardize_columns) return panel;
  if (!panel.obs.allFinite()) {
    throw DegenerateInput(path + ": missing cells cannot be standardized");
  }
  return standardize(panel);
}

void write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

void write_panel(const std::string& path, const ReturnPanel& panel) {
  std::ostringstream out;
  out << "date";
  for (const auto& a : panel.assets) out << ',' << a;
  out << '\n';
  for (Index i = 0; i < panel.n_periods(); ++i) {
    out << panel.dates[static_cast<std::size_t>(i)];
    for (Index j = 0; j < panel.n_assets(); ++j) out << ',' << format_double(panel.obs(i, j));
    out << '\n';
  }
  write_text(path, out.str());
}

Vector load_riskfree(const std::string& path, const std::vector<std::string>& dates) {
  const DatedTable table = read_dated_table(path);
  Index col = 0;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (lower(table.columns[c]) == "rf") col = static_cast<Index>(c);
  }
  std::unordered_map<std::string, Index> index;
  for (std::size_t i = 0; i < table.dates.size(); ++i) index[table.dates[i]] = static_cast<Index>(i);
  Vector out(static_cast<Index>(dates.size()));
  for (std::size_t i = 0; i < dates.size(); ++i) {
    const auto it = index.find(dates[i]);
    if (it == index.end()) throw ParseError(path + ": no risk-free rate for " + dates[i], 0, 0);
    out(static_cast<Index>(i)) = table.values(it->second, col);
  }
  return out;
}

ObservedFactors load_factors(const std::string& path, const std::vector<std::string>& dates) {
  const DatedTable table = read_dated_table(path);
  std::vector<Index> cols;
  ObservedFactors out;
  for (const char* name : {"mkt_rf", "smb", "hml"}) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (lower(table.columns[c]) == name) {
        cols.push_back(static_cast<Index>(c));
        out.labels.push_back(name);
      }
    }
  }
  if (cols.empty()) throw ParseError(path + ": no mkt_rf, smb or hml column", 1, 0);
  std::unordered_map<std::string, Index> index;
  for (std::size_t i = 0; i < table.dates.size(); ++i) index[table.dates[i]] = static_cast<Index>(i);
  out.series = Matrix::Constant(static_cast<Index>(dates.size()), static_cast<Index>(cols.size()),
                                std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < dates.size(); ++i) {
    const auto it = index.find(dates[i]);
    if (it == index.end()) continue;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out.series(static_cast<Index>(i), static_cast<Index>(k)) = table.values(it->second, cols[k]);
    }
  }
  return out;
}

void write_covariance(const std::string& path, const CovarianceEstimate& estimate,
                      const std::vector<std::string>& labels) {
  const Index n = estimate.matrix.dim();
  if (static_cast<Index>(labels.size()) != n) throw DegenerateInput("write_covariance: label count mismatch");
  std::ostringstream out;
  out << "asset";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  for (Index i = 0; i < n; ++i) {
    out << labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) out << ',' << format_double(estimate.matrix(i, j));
    out << '\n';
  }
  write_text(path, out.str());

  nlohmann::json meta;
  meta["estimator"] = std::string(to_string(estimate.estimator_id));
  meta["kind"] = estimate.is_precision ? "precision" : "covariance";
  meta["positive_definite"] = estimate.positive_definite;
  meta["dim"] = n;
  meta["params"] = nlohmann::json::object();
  for (const auto& [k, v] : estimate.params) meta["params"][k] = v;
  write_text(path + ".json", meta.dump(2) + "\n");
}

LoadedCovariance read_covariance(const std::string& path) {
  const std::string text = slurp(path);
  std::istringstream in(text);
  std::string line;
  LoadedCovariance out;
  std::vector<std::vector<double>> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_row(line);
    if (out.labels.empty()) {
      out.labels.assign(cells.begin() + 1, cells.end());
      continue;
    }
    std::vector<double> values;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size() || cells[c].empty()) {
        throw NonNumericCell(path + ": non-numeric cell", row, c + 1);
      }
      values.push_back(v);
    }
    if (values.size() != out.labels.size()) throw ParseError(path + ": ragged row", row, cells.size());
    rows.push_back(std::move(values));
  }
  const Index n = static_cast<Index>(out.labels.size());
  if (static_cast<Index>(rows.size()) != n || n == 0) throw ParseError(path + ": matrix is not square", row, 0);
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  out.matrix = SymMatrix(m);
  const std::string sidecar = path + ".json";
  if (std::filesystem::exists(sidecar)) out.metadata = nlohmann::json::parse(slurp(sidecar));
  return out;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
  nlohmann::json j;
  j["command"] = manifest.command;
  j["config"] = manifest.config;
  j["seed"] = manifest.seed;
  j["library_version"] = kLibraryVersion;
  j["wall_time_seconds"] = manifest.wall_time;
  j["errors"] = manifest.errors;
  j["outputs"] = manifest.outputs;
  write_text(path, j.dump(2) + "\n");
}

}  // namespace safcov

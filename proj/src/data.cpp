#include "hlglm/data.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hlglm/errors.hpp"

namespace hlglm {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + s.size() && std::isfinite(out);
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ingest_error, "cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::empty_data, "'" + path + "' is empty");
  table.header = split_line(line);
  if (table.header.empty())
    fail(ErrorCode::ingest_error, "'" + path + "' has an empty header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size())
      fail(ErrorCode::ingest_error,
           path + ":" + std::to_string(lineno) + ": expected " +
               std::to_string(table.header.size()) + " fields, got " +
               std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

std::vector<double> numeric_column(const CsvTable& table,
                                   const std::string& name) {
  int col = table.column(name);
  if (col < 0) fail(ErrorCode::ingest_error, "no column named '" + name + "'");
  std::vector<double> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    double v = 0.0;
    if (!parse_double(table.rows[r][static_cast<std::size_t>(col)], v))
      fail(ErrorCode::ingest_error,
           "row " + std::to_string(r + 2) + ", column '" + name +
               "': unparseable numeric value");
    out.push_back(v);
  }
  return out;
}

ZScoreStats fit_zscore(const Eigen::MatrixXd& X) {
  ZScoreStats st;
  const auto p = X.cols();
  st.mean.assign(static_cast<std::size_t>(p), 0.0);
  st.sd.assign(static_cast<std::size_t>(p), 1.0);
  for (Eigen::Index j = 1; j < p; ++j) {  // column 0 is the ones column
    double m = X.col(j).mean();
    double var = (X.col(j).array() - m).square().sum() /
                 std::max<double>(1.0, static_cast<double>(X.rows() - 1));
    double sd = std::sqrt(var);
    st.mean[static_cast<std::size_t>(j)] = m;
    st.sd[static_cast<std::size_t>(j)] = sd > 0.0 ? sd : 1.0;
  }
  return st;
}

void apply_zscore(Eigen::MatrixXd& X, const ZScoreStats& stats) {
  if (static_cast<std::size_t>(X.cols()) != stats.mean.size() ||
      static_cast<std::size_t>(X.cols()) != stats.sd.size())
    fail(ErrorCode::dimension_error, "z-score stats do not match column count");
  for (Eigen::Index j = 1; j < X.cols(); ++j)
    X.col(j) = (X.col(j).array() - stats.mean[static_cast<std::size_t>(j)]) /
               stats.sd[static_cast<std::size_t>(j)];
}

IngestResult ingest_csv(const std::string& path, const ColumnSchema& schema,
                        const LatticeSpec& lattice, const FamilySpec& family,
                        const ZScoreStats* apply, bool require_response) {
  CsvTable table = read_csv(path);

  int response_col = -1;
  if (require_response) {
    if (schema.response.empty())
      fail(ErrorCode::config_error, "no response column configured");
    response_col = table.column(schema.response);
    if (response_col < 0)
      fail(ErrorCode::ingest_error,
           "response column '" + schema.response + "' not in '" + path + "'");
  }

  std::vector<int> feature_cols;
  for (const auto& f : schema.features) {
    int c = table.column(f);
    if (c < 0)
      fail(ErrorCode::ingest_error,
           "feature column '" + f + "' not in '" + path + "'");
    feature_cols.push_back(c);
  }

  struct DimSource {
    int col;
    bool numeric;
  };
  std::vector<DimSource> dim_sources;
  for (const LatticeDim& d : lattice.dims()) {
    int c = table.column(d.name);
    if (c < 0)
      fail(ErrorCode::ingest_error,
           "lattice column '" + d.name + "' not in '" + path + "'");
    dim_sources.push_back({c, d.kind == DimKind::binned_continuous});
  }

  IngestResult result;
  auto& report = result.report;
  report.rows_read = static_cast<std::int64_t>(table.rows.size());

  std::vector<double> ys;
  std::vector<std::vector<double>> feats;
  std::vector<CellIndex> cells;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string rowpos = "row " + std::to_string(r + 2);

    // lattice sources first: a missing value drops the row, counted
    CellIndex cell;
    cell.kappa.reserve(dim_sources.size());
    bool dropped = false;
    for (std::size_t di = 0; di < dim_sources.size(); ++di) {
      const auto& src = dim_sources[di];
      const std::string& raw = row[static_cast<std::size_t>(src.col)];
      if (raw.empty()) {
        dropped = true;
        break;
      }
      const LatticeDim& dim = lattice.dim(static_cast<int>(di));
      if (src.numeric) {
        double v = 0.0;
        if (!parse_double(raw, v)) {
          dropped = true;
          break;
        }
        cell.kappa.push_back(assign_level(dim, LatticeValue{v}));
      } else {
        cell.kappa.push_back(assign_level(dim, LatticeValue{raw}));
      }
    }
    if (dropped) {
      ++report.rows_dropped_missing_lattice;
      continue;
    }

    double yv = 0.0;
    if (require_response) {
      const std::string& raw = row[static_cast<std::size_t>(response_col)];
      if (!parse_double(raw, yv))
        fail(ErrorCode::ingest_error,
             rowpos + ", column '" + schema.response +
                 "': missing or unparseable response");
      check_response(family, yv);
    }

    std::vector<double> xs;
    xs.reserve(feature_cols.size());
    for (std::size_t fi = 0; fi < feature_cols.size(); ++fi) {
      const std::string& raw = row[static_cast<std::size_t>(feature_cols[fi])];
      double v = 0.0;
      if (!parse_double(raw, v))
        fail(ErrorCode::ingest_error,
             rowpos + ", column '" + schema.features[fi] +
                 "': missing or unparseable feature");
      xs.push_back(v);
    }

    ys.push_back(yv);
    feats.push_back(std::move(xs));
    cells.push_back(std::move(cell));
  }

  report.rows_kept = static_cast<std::int64_t>(ys.size());
  if (report.rows_kept == 0)
    fail(ErrorCode::empty_data, "'" + path + "' has no usable rows");
  if (report.rows_dropped_missing_lattice > 0)
    report.warnings.push_back(
        std::to_string(report.rows_dropped_missing_lattice) +
        " rows dropped for missing lattice features");

  Dataset& data = result.data;
  const auto n = static_cast<Eigen::Index>(ys.size());
  const auto f = static_cast<Eigen::Index>(schema.features.size());
  data.X.resize(n, f + 1);
  data.X.col(0).setOnes();
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.y[i] = ys[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < f; ++j)
      data.X(i, j + 1) = feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  data.cells = std::move(cells);
  data.columns.push_back("(intercept)");
  for (const auto& fname : schema.features) data.columns.push_back(fname);

  result.stats = apply != nullptr ? *apply : fit_zscore(data.X);
  apply_zscore(data.X, result.stats);
  return result;
}

}  // namespace hlglm

// data.hpp -- in-memory dataset and CSV ingestion with train-time z-scoring.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hlglm/glm.hpp"
#include "hlglm/lattice.hpp"

namespace hlglm {

struct Dataset {
  // Column 0 is an explicit ones column; the remaining columns are features.
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<CellIndex> cells;       // one per row
  std::vector<std::string> columns;   // X column names, columns[0] = intercept

  std::int64_t n() const { return X.rows(); }
  int p() const { return static_cast<int>(X.cols()); }
  int feature_count() const { return p() - 1; }
};

// Per-X-column standardization statistics; the ones column is (0, 1).
struct ZScoreStats {
  std::vector<double> mean, sd;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

struct ColumnSchema {
  std::string response;                  // empty for predict-only ingestion
  std::vector<std::string> features;     // numeric columns entering X
};

struct IngestReport {
  std::int64_t rows_read = 0;
  std::int64_t rows_kept = 0;
  std::int64_t rows_dropped_missing_lattice = 0;
  std::vector<std::string> warnings;
};

struct IngestResult {
  Dataset data;
  ZScoreStats stats;
  IngestReport report;
};

// Builds a Dataset from a CSV: response checked against the family's domain,
// features z-scored (stats fit here unless `apply` provides training-split
// stats), lattice source columns resolved to cell indices. Rows missing a
// lattice feature are dropped and counted; unparseable response/feature
// fields are IngestError with row and column.
IngestResult ingest_csv(const std::string& path, const ColumnSchema& schema,
                        const LatticeSpec& lattice, const FamilySpec& family,
                        const ZScoreStats* apply = nullptr,
                        bool require_response = true);

// Extract one numeric column (used when building bins from a raw file).
std::vector<double> numeric_column(const CsvTable& table,
                                   const std::string& name);

ZScoreStats fit_zscore(const Eigen::MatrixXd& X);
void apply_zscore(Eigen::MatrixXd& X, const ZScoreStats& stats);

}  // namespace hlglm

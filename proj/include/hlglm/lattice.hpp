// lattice.hpp -- factor lattice: binned/categorical dims, cell addressing,
// bin-count feasibility.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace hlglm {

enum class DimKind { categorical, binned_continuous };

struct LatticeDim {
  std::string name;
  DimKind kind = DimKind::categorical;
  int levels = 1;
  // binned_continuous: levels-1 strictly increasing edges. Intervals are
  // left-closed right-open; the first and last bins absorb out-of-range
  // values (clamp), so assignment is total on finite inputs.
  std::vector<double> edges;
  // categorical: `levels` distinct labels, in level order.
  std::vector<std::string> labels;
};

struct CellIndex {
  std::vector<int> kappa;  // one level per dim, lattice order

  bool operator==(const CellIndex& o) const { return kappa == o.kappa; }
};

class LatticeSpec {
 public:
  LatticeSpec() = default;
  explicit LatticeSpec(std::vector<LatticeDim> dims);  // validates dims

  int dim_count() const { return static_cast<int>(dims_.size()); }
  std::int64_t cell_count() const;
  const std::vector<LatticeDim>& dims() const { return dims_; }
  const LatticeDim& dim(int i) const { return dims_.at(i); }
  std::vector<int> level_counts() const;

  // Row-major flat cell id, dims in spec order (last dim fastest).
  std::int64_t flat_index(const CellIndex& cell) const;
  CellIndex from_flat(std::int64_t flat) const;

  // Level lookup for one dim; UnknownLevel for unseen categorical labels.
  int level_of_label(int dim, const std::string& label) const;

 private:
  std::vector<LatticeDim> dims_;
  std::vector<std::unordered_map<std::string, int>> label_maps_;
};

using LatticeValue = std::variant<double, std::string>;
using LatticeRow = std::map<std::string, LatticeValue>;

enum class BinStrategy { quantile, explicit_edges };

// Quantile binning: edges at k/L empirical quantiles (midpoint rule at exact
// ranks), deduplicated; realized level count may be lower than requested.
// Fewer distinct values than requested bins is a DegenerateBinning error.
LatticeDim build_quantile_bins(const std::string& name,
                               std::span<const double> column, int levels);

LatticeDim build_explicit_bins(const std::string& name,
                               std::vector<double> edges);

LatticeDim build_categorical_dim(const std::string& name,
                                 std::vector<std::string> labels);

// Strategy dispatcher; `edges` is consumed only by explicit_edges.
LatticeDim build_bins(const std::string& name, std::span<const double> column,
                      int levels, BinStrategy strategy,
                      std::vector<double> edges = {});

// Level assignment for a single dim value.
int assign_level(const LatticeDim& dim, const LatticeValue& value);

// Full cell assignment; every dim's source value must be present in `row`.
CellIndex assign_cell(const LatticeRow& row, const LatticeSpec& spec);

// Largest per-dim level count L with p * (L / safety)^d_cont <= N, floored,
// minimum 1. N <= p is an InfeasibleLattice error.
int max_bins(std::int64_t n, std::int64_t p, int d_cont, double safety = 1.0);

// Local bin budget ratio gamma = p * L^d_cont / N.
double bin_budget_ratio(std::int64_t n, std::int64_t p, int d_cont, int levels);

// Whether splitting each level of a dim with n_min observations in its
// thinnest cell into `levels` children keeps >= n_threshold per child.
bool feasible_refinement(std::int64_t n_min, int levels,
                         std::int64_t n_threshold = 20);

}  // namespace hlglm

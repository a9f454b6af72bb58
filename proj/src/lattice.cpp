#include "hlglm/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hlglm/errors.hpp"

namespace hlglm {

LatticeSpec::LatticeSpec(std::vector<LatticeDim> dims) : dims_(std::move(dims)) {
  if (dims_.empty())
    fail(ErrorCode::dimension_error, "lattice needs at least one dim");
  label_maps_.resize(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const LatticeDim& d = dims_[i];
    if (d.levels < 1)
      fail(ErrorCode::dimension_error, "dim '" + d.name + "' has no levels");
    if (d.kind == DimKind::binned_continuous) {
      if (static_cast<int>(d.edges.size()) != d.levels - 1)
        fail(ErrorCode::dimension_error,
             "dim '" + d.name + "' needs levels-1 edges");
      for (std::size_t k = 1; k < d.edges.size(); ++k)
        if (!(d.edges[k - 1] < d.edges[k]))
          fail(ErrorCode::degenerate_binning,
               "dim '" + d.name + "' edges must be strictly increasing");
    } else {
      if (static_cast<int>(d.labels.size()) != d.levels)
        fail(ErrorCode::dimension_error,
             "dim '" + d.name + "' needs one label per level");
      for (int l = 0; l < d.levels; ++l) {
        auto [it, fresh] = label_maps_[i].emplace(d.labels[l], l);
        (void)it;
        if (!fresh)
          fail(ErrorCode::degenerate_binning,
               "dim '" + d.name + "' has duplicate label '" + d.labels[l] + "'");
      }
    }
  }
}

std::int64_t LatticeSpec::cell_count() const {
  std::int64_t n = 1;
  for (const auto& d : dims_) n *= d.levels;
  return n;
}

std::vector<int> LatticeSpec::level_counts() const {
  std::vector<int> out(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) out[i] = dims_[i].levels;
  return out;
}

std::int64_t LatticeSpec::flat_index(const CellIndex& cell) const {
  if (static_cast<int>(cell.kappa.size()) != dim_count())
    fail(ErrorCode::dimension_error, "cell index arity != lattice dims");
  std::int64_t flat = 0;
  for (int i = 0; i < dim_count(); ++i) {
    int k = cell.kappa[i];
    if (k < 0 || k >= dims_[i].levels)
      fail(ErrorCode::unknown_level,
           "level " + std::to_string(k) + " out of range for dim '" +
               dims_[i].name + "'");
    flat = flat * dims_[i].levels + k;
  }
  return flat;
}

CellIndex LatticeSpec::from_flat(std::int64_t flat) const {
  if (flat < 0 || flat >= cell_count())
    fail(ErrorCode::unknown_level, "flat cell id out of range");
  CellIndex cell;
  cell.kappa.assign(dims_.size(), 0);
  for (int i = dim_count() - 1; i >= 0; --i) {
    cell.kappa[i] = static_cast<int>(flat % dims_[i].levels);
    flat /= dims_[i].levels;
  }
  return cell;
}

int LatticeSpec::level_of_label(int dim, const std::string& label) const {
  const auto& m = label_maps_.at(dim);
  auto it = m.find(label);
  if (it == m.end())
    fail(ErrorCode::unknown_level,
         "unseen label '" + label + "' for dim '" + dims_[dim].name + "'");
  return it->second;
}

namespace {

// Empirical quantile with midpoint interpolation at exact ranks: for level
// q = k/L over n sorted points, rank t = q*n; an integral t averages the two
// straddling order statistics, otherwise the ceiling order statistic is used.
double quantile_midpoint(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  double t = q * static_cast<double>(n);
  double nearest = std::round(t);
  if (std::abs(t - nearest) < 1e-9 * static_cast<double>(n)) {
    auto i = static_cast<std::size_t>(nearest);
    if (i == 0) return sorted.front();
    if (i >= n) return sorted.back();
    return 0.5 * (sorted[i - 1] + sorted[i]);
  }
  auto i = static_cast<std::size_t>(std::ceil(t));
  if (i < 1) i = 1;
  if (i > n) i = n;
  return sorted[i - 1];
}

}  // namespace

LatticeDim build_quantile_bins(const std::string& name,
                               std::span<const double> column, int levels) {
  if (levels < 1)
    fail(ErrorCode::dimension_error, "dim '" + name + "': levels must be >= 1");
  if (column.empty())
    fail(ErrorCode::empty_data, "dim '" + name + "': empty column");
  std::vector<double> sorted;
  sorted.reserve(column.size());
  for (double v : column) {
    if (!std::isfinite(v))
      fail(ErrorCode::ingest_error,
           "dim '" + name + "': non-finite value in binning column");
    sorted.push_back(v);
  }
  std::sort(sorted.begin(), sorted.end());

  std::size_t distinct = 1;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] != sorted[i - 1]) ++distinct;
  if (distinct < static_cast<std::size_t>(levels))
    fail(ErrorCode::degenerate_binning,
         "column '" + name + "' has " + std::to_string(distinct) +
             " distinct values, fewer than " + std::to_string(levels) +
             " requested bins");

  std::vector<double> edges;
  edges.reserve(static_cast<std::size_t>(levels) - 1);
  for (int k = 1; k < levels; ++k) {
    double e = quantile_midpoint(sorted, static_cast<double>(k) /
                                             static_cast<double>(levels));
    // ties collapse duplicate edges; the realized level count shrinks.
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }

  LatticeDim dim;
  dim.name = name;
  dim.kind = DimKind::binned_continuous;
  dim.edges = std::move(edges);
  dim.levels = static_cast<int>(dim.edges.size()) + 1;
  return dim;
}

LatticeDim build_explicit_bins(const std::string& name,
                               std::vector<double> edges) {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (!std::isfinite(edges[k]))
      fail(ErrorCode::degenerate_binning,
           "dim '" + name + "': non-finite edge");
    if (k > 0 && !(edges[k - 1] < edges[k]))
      fail(ErrorCode::degenerate_binning,
           "dim '" + name + "': edges must be strictly increasing");
  }
  LatticeDim dim;
  dim.name = name;
  dim.kind = DimKind::binned_continuous;
  dim.levels = static_cast<int>(edges.size()) + 1;
  dim.edges = std::move(edges);
  return dim;
}

LatticeDim build_categorical_dim(const std::string& name,
                                 std::vector<std::string> labels) {
  if (labels.empty())
    fail(ErrorCode::dimension_error, "dim '" + name + "': no labels");
  std::set<std::string> seen(labels.begin(), labels.end());
  if (seen.size() != labels.size())
    fail(ErrorCode::degenerate_binning,
         "dim '" + name + "': duplicate labels");
  LatticeDim dim;
  dim.name = name;
  dim.kind = DimKind::categorical;
  dim.levels = static_cast<int>(labels.size());
  dim.labels = std::move(labels);
  return dim;
}

LatticeDim build_bins(const std::string& name, std::span<const double> column,
                      int levels, BinStrategy strategy,
                      std::vector<double> edges) {
  switch (strategy) {
    case BinStrategy::quantile:
      return build_quantile_bins(name, column, levels);
    case BinStrategy::explicit_edges:
      return build_explicit_bins(name, std::move(edges));
  }
  fail(ErrorCode::config_error, "unknown bin strategy");
}

int assign_level(const LatticeDim& dim, const LatticeValue& value) {
  if (dim.kind == DimKind::binned_continuous) {
    const double* v = std::get_if<double>(&value);
    if (v == nullptr)
      fail(ErrorCode::missing_lattice_feature,
           "dim '" + dim.name + "' expects a numeric value");
    if (!std::isfinite(*v))
      fail(ErrorCode::missing_lattice_feature,
           "dim '" + dim.name + "' value is not finite");
    // count of edges <= v: left-closed right-open bins with clamping tails.
    auto it = std::upper_bound(dim.edges.begin(), dim.edges.end(), *v);
    return static_cast<int>(it - dim.edges.begin());
  }
  const std::string* s = std::get_if<std::string>(&value);
  if (s == nullptr)
    fail(ErrorCode::missing_lattice_feature,
         "dim '" + dim.name + "' expects a label");
  for (int l = 0; l < dim.levels; ++l)
    if (dim.labels[static_cast<std::size_t>(l)] == *s) return l;
  fail(ErrorCode::unknown_level,
       "unseen label '" + *s + "' for dim '" + dim.name + "'");
}

CellIndex assign_cell(const LatticeRow& row, const LatticeSpec& spec) {
  CellIndex cell;
  cell.kappa.reserve(static_cast<std::size_t>(spec.dim_count()));
  for (const LatticeDim& d : spec.dims()) {
    auto it = row.find(d.name);
    if (it == row.end())
      fail(ErrorCode::missing_lattice_feature,
           "row is missing lattice feature '" + d.name + "'");
    cell.kappa.push_back(assign_level(d, it->second));
  }
  return cell;
}

int max_bins(std::int64_t n, std::int64_t p, int d_cont, double safety) {
  if (p < 1) fail(ErrorCode::dimension_error, "max_bins: p must be >= 1");
  if (d_cont < 1)
    fail(ErrorCode::dimension_error, "max_bins: d_cont must be >= 1");
  if (!(safety > 0.0) || safety > 1.0)
    fail(ErrorCode::config_error, "max_bins: safety must be in (0, 1]");
  if (n <= p)
    fail(ErrorCode::infeasible_lattice,
         "max_bins: N=" + std::to_string(n) + " <= p=" + std::to_string(p));

  double ratio = static_cast<double>(n) / static_cast<double>(p);
  // candidate from the closed form, then verified with the defining
  // inequality (L/safety)^d <= N/p so representation error cannot move the
  // floor off a worked integer value.
  auto feasible = [&](int levels) {
    long double lhs = 1.0L;
    long double base = static_cast<long double>(levels) / safety;
    for (int i = 0; i < d_cont; ++i) lhs *= base;
    return lhs <= static_cast<long double>(ratio) * (1.0L + 1e-12L);
  };
  int cand = static_cast<int>(
      std::floor(safety * std::pow(ratio, 1.0 / d_cont) + 1e-9));
  if (cand < 1) cand = 1;
  while (cand > 1 && !feasible(cand)) --cand;
  while (feasible(cand + 1)) ++cand;
  return cand;
}

double bin_budget_ratio(std::int64_t n, std::int64_t p, int d_cont,
                        int levels) {
  if (n < 1) fail(ErrorCode::empty_data, "bin_budget_ratio: no data");
  double cells = std::pow(static_cast<double>(levels), d_cont);
  return static_cast<double>(p) * cells / static_cast<double>(n);
}

bool feasible_refinement(std::int64_t n_min, int levels,
                         std::int64_t n_threshold) {
  if (levels < 1)
    fail(ErrorCode::dimension_error, "feasible_refinement: levels must be >= 1");
  return static_cast<double>(n_min) / static_cast<double>(levels) >=
         static_cast<double>(n_threshold);
}

}  // namespace hlglm

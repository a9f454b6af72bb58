// decomposition.hpp -- additive interaction expansion over a lattice:
// one tensor per dim subset up to a truncation order, and the machinery to
// sum the relevant entries for a cell.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "hlglm/lattice.hpp"

namespace hlglm {

// A component is identified by the sorted set of dims it varies over; the
// empty set is the global (order-0) component.
struct ComponentId {
  std::vector<int> dims;

  int order() const { return static_cast<int>(dims.size()); }
  bool operator==(const ComponentId& o) const { return dims == o.dims; }
};

// All dim subsets of {0..d-1} with size <= K, ordered by (order, lexicographic
// dims). Count is sum_{k=0..K} C(d, k).
std::vector<ComponentId> enumerate_components(int d, int truncation);

std::int64_t component_count(int d, int truncation);

class DecomposedParameter {
 public:
  DecomposedParameter() = default;
  // Zero-initialized tensors for every component of order <= truncation.
  DecomposedParameter(std::vector<int> levels, int coef_dim, int truncation);

  int dim_count() const { return static_cast<int>(levels_.size()); }
  const std::vector<int>& levels() const { return levels_; }
  int coef_dim() const { return coef_dim_; }
  int truncation() const { return truncation_; }

  int component_count() const { return static_cast<int>(components_.size()); }
  const ComponentId& component(int i) const { return components_.at(i); }
  const std::vector<ComponentId>& components() const { return components_; }

  // Tensor for component i: rows = level combinations of that component
  // (row-major over its dims, lattice order), cols = coef_dim.
  Eigen::MatrixXd& tensor(int i) { return tensors_.at(i); }
  const Eigen::MatrixXd& tensor(int i) const { return tensors_.at(i); }

  std::int64_t combo_count(int i) const { return tensors_.at(i).rows(); }

  // Row of component i's tensor selected by restricting a full cell index.
  std::int64_t combo_index(int i, const CellIndex& cell) const;

  // Sum of the component rows selected by `cell` (length coef_dim).
  Eigen::VectorXd materialize(const CellIndex& cell) const;

  std::int64_t parameter_count() const;

  // Same shape check used before mixing two decompositions.
  bool same_shape(const DecomposedParameter& o) const;

 private:
  std::vector<int> levels_;
  int coef_dim_ = 0;
  int truncation_ = 0;
  std::vector<ComponentId> components_;
  std::vector<Eigen::MatrixXd> tensors_;
};

// Per-observation combo lookup, precomputed once per (decomposition shape,
// cell assignment): binding[i][n] is the tensor row of component i that
// observation n selects.
using CellBinding = std::vector<std::vector<std::int32_t>>;

CellBinding bind_cells(const DecomposedParameter& dp,
                       std::span<const CellIndex> cells);

// Carry a coarse fit onto a refined lattice: each refined dim supplies a
// parent map (fine level -> coarse level, surjective); inherited tensors copy
// the parent entry, components new at `new_truncation` start at zero.
// Predictions are unchanged at the warm start point.
DecomposedParameter warm_start(const DecomposedParameter& coarse,
                               const std::vector<std::vector<int>>& parent_maps,
                               int new_truncation);

struct ComponentStats {
  ComponentId id;
  std::vector<std::int64_t> counts;  // per level combination
  std::vector<double> fractions;
  std::int64_t total = 0;
  std::int64_t empty_combos = 0;
};

ComponentStats component_stats(std::span<const CellIndex> cells,
                               const ComponentId& id, const LatticeSpec& spec);

}  // namespace hlglm

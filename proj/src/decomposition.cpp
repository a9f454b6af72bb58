#include "hlglm/decomposition.hpp"

#include <algorithm>

#include "hlglm/errors.hpp"

namespace hlglm {

namespace {

void check_truncation(int d, int truncation) {
  if (truncation < 0 || truncation > d)
    fail(ErrorCode::invalid_truncation,
         "truncation " + std::to_string(truncation) +
             " outside [0, " + std::to_string(d) + "]");
}

void subsets_of_size(int d, int k, std::vector<ComponentId>& out) {
  std::vector<int> pick(static_cast<std::size_t>(k));
  // iterative lexicographic k-subset enumeration
  for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = i;
  if (k == 0) {
    out.push_back(ComponentId{});
    return;
  }
  while (true) {
    out.push_back(ComponentId{pick});
    int i = k - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == d - k + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
}

}  // namespace

std::vector<ComponentId> enumerate_components(int d, int truncation) {
  if (d < 1) fail(ErrorCode::dimension_error, "need at least one dim");
  check_truncation(d, truncation);
  std::vector<ComponentId> out;
  for (int k = 0; k <= truncation; ++k) subsets_of_size(d, k, out);
  return out;
}

std::int64_t component_count(int d, int truncation) {
  check_truncation(d, truncation);
  std::int64_t total = 0;
  for (int k = 0; k <= truncation; ++k) {
    std::int64_t c = 1;
    for (int i = 0; i < k; ++i) c = c * (d - i) / (i + 1);
    total += c;
  }
  return total;
}

DecomposedParameter::DecomposedParameter(std::vector<int> levels, int coef_dim,
                                         int truncation)
    : levels_(std::move(levels)), coef_dim_(coef_dim), truncation_(truncation) {
  if (levels_.empty())
    fail(ErrorCode::dimension_error, "decomposition needs at least one dim");
  for (int l : levels_)
    if (l < 1) fail(ErrorCode::dimension_error, "dim with no levels");
  if (coef_dim_ < 0)
    fail(ErrorCode::dimension_error, "negative coefficient dimension");
  components_ = enumerate_components(dim_count(), truncation_);
  tensors_.reserve(components_.size());
  for (const ComponentId& c : components_) {
    std::int64_t rows = 1;
    for (int dim : c.dims) rows *= levels_[static_cast<std::size_t>(dim)];
    tensors_.emplace_back(Eigen::MatrixXd::Zero(rows, coef_dim_));
  }
}

std::int64_t DecomposedParameter::combo_index(int i,
                                              const CellIndex& cell) const {
  if (static_cast<int>(cell.kappa.size()) != dim_count())
    fail(ErrorCode::model_lattice_mismatch,
         "cell arity does not match decomposition dims");
  const ComponentId& c = components_.at(static_cast<std::size_t>(i));
  std::int64_t idx = 0;
  for (int dim : c.dims) {
    int k = cell.kappa[static_cast<std::size_t>(dim)];
    int l = levels_[static_cast<std::size_t>(dim)];
    if (k < 0 || k >= l)
      fail(ErrorCode::unknown_level, "cell level out of range");
    idx = idx * l + k;
  }
  return idx;
}

Eigen::VectorXd DecomposedParameter::materialize(const CellIndex& cell) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(coef_dim_);
  for (int i = 0; i < component_count(); ++i)
    out += tensors_[static_cast<std::size_t>(i)].row(combo_index(i, cell));
  return out;
}

std::int64_t DecomposedParameter::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool DecomposedParameter::same_shape(const DecomposedParameter& o) const {
  return levels_ == o.levels_ && coef_dim_ == o.coef_dim_ &&
         truncation_ == o.truncation_;
}

CellBinding bind_cells(const DecomposedParameter& dp,
                       std::span<const CellIndex> cells) {
  CellBinding binding(static_cast<std::size_t>(dp.component_count()));
  for (int i = 0; i < dp.component_count(); ++i) {
    auto& col = binding[static_cast<std::size_t>(i)];
    col.resize(cells.size());
    for (std::size_t n = 0; n < cells.size(); ++n)
      col[n] = static_cast<std::int32_t>(dp.combo_index(i, cells[n]));
  }
  return binding;
}

DecomposedParameter warm_start(const DecomposedParameter& coarse,
                               const std::vector<std::vector<int>>& parent_maps,
                               int new_truncation) {
  if (static_cast<int>(parent_maps.size()) != coarse.dim_count())
    fail(ErrorCode::invalid_refinement,
         "need one parent map per dim (identity maps for unrefined dims)");
  if (new_truncation < coarse.truncation())
    fail(ErrorCode::invalid_truncation,
         "warm start cannot lower the truncation order");

  std::vector<int> fine_levels(parent_maps.size());
  for (std::size_t i = 0; i < parent_maps.size(); ++i) {
    const auto& pm = parent_maps[i];
    int coarse_l = coarse.levels()[i];
    if (pm.empty())
      fail(ErrorCode::invalid_refinement,
           "dim " + std::to_string(i) + ": empty parent map");
    std::vector<bool> hit(static_cast<std::size_t>(coarse_l), false);
    for (int parent : pm) {
      if (parent < 0 || parent >= coarse_l)
        fail(ErrorCode::invalid_refinement,
             "dim " + std::to_string(i) + ": parent level out of range");
      hit[static_cast<std::size_t>(parent)] = true;
    }
    for (int l = 0; l < coarse_l; ++l)
      if (!hit[static_cast<std::size_t>(l)])
        fail(ErrorCode::invalid_refinement,
             "dim " + std::to_string(i) + ": coarse level " +
                 std::to_string(l) + " has no children");
    fine_levels[i] = static_cast<int>(pm.size());
  }

  DecomposedParameter fine(fine_levels, coarse.coef_dim(), new_truncation);

  // walk fine combos of each inherited component; copy the parent's row
  for (int ci = 0; ci < fine.component_count(); ++ci) {
    const ComponentId& id = fine.component(ci);
    if (id.order() > coarse.truncation()) continue;  // new order: stays zero
    int coarse_ci = -1;
    for (int cj = 0; cj < coarse.component_count(); ++cj)
      if (coarse.component(cj) == id) {
        coarse_ci = cj;
        break;
      }
    if (coarse_ci < 0)
      fail(ErrorCode::invalid_refinement, "component missing from coarse fit");

    const Eigen::MatrixXd& src = coarse.tensor(coarse_ci);
    Eigen::MatrixXd& dst = fine.tensor(ci);
    const int order = id.order();
    std::vector<int> combo(static_cast<std::size_t>(order), 0);
    for (std::int64_t row = 0; row < dst.rows(); ++row) {
      std::int64_t parent_row = 0;
      for (int j = 0; j < order; ++j) {
        int dim = id.dims[static_cast<std::size_t>(j)];
        int parent = parent_maps[static_cast<std::size_t>(dim)]
                                [static_cast<std::size_t>(combo[static_cast<std::size_t>(j)])];
        parent_row = parent_row * coarse.levels()[static_cast<std::size_t>(dim)] + parent;
      }
      dst.row(row) = src.row(parent_row);
      // odometer increment over the component's fine levels
      for (int j = order - 1; j >= 0; --j) {
        int dim = id.dims[static_cast<std::size_t>(j)];
        if (++combo[static_cast<std::size_t>(j)] < fine_levels[static_cast<std::size_t>(dim)]) break;
        combo[static_cast<std::size_t>(j)] = 0;
      }
    }
  }
  return fine;
}

ComponentStats component_stats(std::span<const CellIndex> cells,
                               const ComponentId& id, const LatticeSpec& spec) {
  for (std::size_t j = 1; j < id.dims.size(); ++j)
    if (id.dims[j - 1] >= id.dims[j])
      fail(ErrorCode::dimension_error, "component dims must be sorted");
  std::int64_t combos = 1;
  for (int dim : id.dims) {
    if (dim < 0 || dim >= spec.dim_count())
      fail(ErrorCode::model_lattice_mismatch, "component dim out of range");
    combos *= spec.dim(dim).levels;
  }

  ComponentStats st;
  st.id = id;
  st.counts.assign(static_cast<std::size_t>(combos), 0);
  st.total = static_cast<std::int64_t>(cells.size());
  for (const CellIndex& cell : cells) {
    if (static_cast<int>(cell.kappa.size()) != spec.dim_count())
      fail(ErrorCode::model_lattice_mismatch, "cell arity != lattice dims");
    std::int64_t idx = 0;
    for (int dim : id.dims)
      idx = idx * spec.dim(dim).levels + cell.kappa[static_cast<std::size_t>(dim)];
    ++st.counts[static_cast<std::size_t>(idx)];
  }
  st.fractions.resize(st.counts.size());
  for (std::size_t i = 0; i < st.counts.size(); ++i) {
    st.fractions[i] = st.total > 0
                          ? static_cast<double>(st.counts[i]) /
                                static_cast<double>(st.total)
                          : 0.0;
    if (st.counts[i] == 0) ++st.empty_combos;
  }
  return st;
}

}  // namespace hlglm

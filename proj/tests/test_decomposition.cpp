#include <doctest.h>

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "hlglm/decomposition.hpp"
#include "helpers.hpp"

using namespace hlglm;
using testutil::thrown_code;

namespace {

// Brute-force reference: sum tensor rows over every dim subset of size <= K,
// with the row of subset S addressed row-major over S's dims in lattice
// order. Only the component lookup goes through the class under test.
Eigen::VectorXd oracle_materialize(const DecomposedParameter& dp,
                                   const CellIndex& cell) {
  const int d = dp.dim_count();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dp.coef_dim());
  for (int mask = 0; mask < (1 << d); ++mask) {
    std::vector<int> dims;
    for (int i = 0; i < d; ++i)
      if (mask & (1 << i)) dims.push_back(i);
    if (static_cast<int>(dims.size()) > dp.truncation()) continue;
    std::int64_t row = 0;
    for (int dim : dims) row = row * dp.levels()[dim] + cell.kappa[dim];
    int comp = -1;
    for (int i = 0; i < dp.component_count(); ++i)
      if (dp.component(i).dims == dims) comp = i;
    REQUIRE(comp >= 0);
    acc += dp.tensor(comp).row(row).transpose();
  }
  return acc;
}

void randomize(DecomposedParameter& dp, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  for (int i = 0; i < dp.component_count(); ++i)
    for (std::int64_t r = 0; r < dp.tensor(i).rows(); ++r)
      for (std::int64_t c = 0; c < dp.tensor(i).cols(); ++c)
        dp.tensor(i)(r, c) = z(rng);
}

}  // namespace

TEST_CASE("component enumeration: (order, lex) order and binomial count") {
  auto comps = enumerate_components(3, 2);
  REQUIRE(comps.size() == 7);  // 1 + 3 + 3
  CHECK(comps[0].dims.empty());
  CHECK(comps[1].dims == std::vector<int>{0});
  CHECK(comps[2].dims == std::vector<int>{1});
  CHECK(comps[3].dims == std::vector<int>{2});
  CHECK(comps[4].dims == std::vector<int>{0, 1});
  CHECK(comps[5].dims == std::vector<int>{0, 2});
  CHECK(comps[6].dims == std::vector<int>{1, 2});
  CHECK(component_count(3, 3) == 8);
  CHECK(component_count(4, 2) == 11);
  CHECK(thrown_code([] { enumerate_components(2, 3); }) ==
        ErrorCode::invalid_truncation);
  CHECK(thrown_code([] { enumerate_components(2, -1); }) ==
        ErrorCode::invalid_truncation);
}

TEST_CASE("decomposed parameter: shapes and counts") {
  DecomposedParameter dp({2, 2}, 2, 1);
  REQUIRE(dp.component_count() == 3);
  CHECK(dp.combo_count(0) == 1);
  CHECK(dp.combo_count(1) == 2);
  CHECK(dp.combo_count(2) == 2);
  CHECK(dp.parameter_count() == 10);  // (1 + 2 + 2) rows x coef_dim 2
  CHECK(dp.same_shape(DecomposedParameter({2, 2}, 2, 1)));
  CHECK_FALSE(dp.same_shape(DecomposedParameter({2, 2}, 2, 2)));
  CHECK_FALSE(dp.same_shape(DecomposedParameter({2, 3}, 2, 1)));
}

TEST_CASE("combo_index restricts a cell to a component's dims") {
  DecomposedParameter dp({2, 3}, 1, 2);
  CellIndex cell;
  cell.kappa = {1, 2};
  CHECK(dp.combo_index(0, cell) == 0);
  CHECK(dp.combo_index(1, cell) == 1);  // dims {0}
  CHECK(dp.combo_index(2, cell) == 2);  // dims {1}
  CHECK(dp.combo_index(3, cell) == 5);  // dims {0,1}, row-major
}

TEST_CASE("materialize matches the brute-force subset sum") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick_d(1, 3), pick_l(2, 4), pick_p(1, 3);
  for (int it = 0; it < 50; ++it) {
    int d = pick_d(rng);
    std::vector<int> levels;
    for (int i = 0; i < d; ++i) levels.push_back(pick_l(rng));
    std::uniform_int_distribution<int> pick_k(0, d);
    DecomposedParameter dp(levels, pick_p(rng), pick_k(rng));
    randomize(dp, rng);
    LatticeSpec spec = testutil::grid(levels);
    for (std::int64_t f = 0; f < spec.cell_count(); ++f) {
      CellIndex cell = spec.from_flat(f);
      Eigen::VectorXd got = dp.materialize(cell);
      Eigen::VectorXd want = oracle_materialize(dp, cell);
      CHECK((got - want).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

TEST_CASE("bind_cells precomputes the combo lookup") {
  std::vector<int> levels{2, 3};
  DecomposedParameter dp(levels, 1, 2);
  LatticeSpec spec = testutil::grid(levels);
  std::vector<CellIndex> cells;
  for (std::int64_t f = 0; f < spec.cell_count(); ++f)
    cells.push_back(spec.from_flat(f));
  CellBinding bind = bind_cells(dp, cells);
  REQUIRE(static_cast<int>(bind.size()) == dp.component_count());
  for (int i = 0; i < dp.component_count(); ++i)
    for (std::size_t n = 0; n < cells.size(); ++n)
      CHECK(bind[i][n] == dp.combo_index(i, cells[n]));
}

TEST_CASE("warm_start leaves predictions unchanged at the handoff") {
  std::mt19937_64 rng(11);
  DecomposedParameter coarse({2, 2}, 2, 1);
  randomize(coarse, rng);
  // refine both dims 2 -> 4, fine levels {0,1}->0 and {2,3}->1
  std::vector<std::vector<int>> parents{{0, 0, 1, 1}, {0, 0, 1, 1}};
  DecomposedParameter fine = warm_start(coarse, parents, 2);
  CHECK(fine.truncation() == 2);
  CHECK(fine.levels() == std::vector<int>{4, 4});
  LatticeSpec fine_spec = testutil::grid({4, 4});
  for (std::int64_t f = 0; f < fine_spec.cell_count(); ++f) {
    CellIndex fc = fine_spec.from_flat(f);
    CellIndex cc;
    cc.kappa = {parents[0][fc.kappa[0]], parents[1][fc.kappa[1]]};
    Eigen::VectorXd got = fine.materialize(fc);
    Eigen::VectorXd want = coarse.materialize(cc);
    CHECK((got - want).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("warm_start rejects bad parent maps and truncations") {
  DecomposedParameter coarse({2}, 1, 1);
  // not surjective: coarse level 1 never appears
  CHECK(thrown_code([&] { warm_start(coarse, {{0, 0, 0}}, 1); }) ==
        ErrorCode::invalid_refinement);
  // out-of-range parent level
  CHECK(thrown_code([&] { warm_start(coarse, {{0, 2}}, 1); }) ==
        ErrorCode::invalid_refinement);
  // map arity must match dim count
  CHECK(thrown_code([&] { warm_start(coarse, {}, 1); }) ==
        ErrorCode::invalid_refinement);
  // cannot drop below the coarse truncation
  CHECK(thrown_code([&] { warm_start(coarse, {{0, 0, 1}}, 0); }) ==
        ErrorCode::invalid_truncation);
}

TEST_CASE("component_stats counts rows per level combination") {
  std::vector<int> levels{2, 2};
  LatticeSpec spec = testutil::grid(levels);
  std::vector<CellIndex> cells;
  for (std::int64_t f : {0, 0, 0, 1, 3}) cells.push_back(spec.from_flat(f));
  ComponentId pair;
  pair.dims = {0, 1};
  ComponentStats st = component_stats(cells, pair, spec);
  REQUIRE(st.counts.size() == 4);
  CHECK(st.counts[0] == 3);
  CHECK(st.counts[1] == 1);
  CHECK(st.counts[2] == 0);
  CHECK(st.counts[3] == 1);
  CHECK(st.total == 5);
  CHECK(st.empty_combos == 1);
  CHECK(st.fractions[0] == doctest::Approx(0.6));

  ComponentId solo;
  solo.dims = {1};
  ComponentStats s1 = component_stats(cells, solo, spec);
  CHECK(s1.counts[0] == 3);
  CHECK(s1.counts[1] == 2);
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "hlglm/lattice.hpp"
#include "helpers.hpp"

using namespace hlglm;
using testutil::thrown_code;

TEST_CASE("quantile bins: midpoint edges on small columns") {
  std::vector<double> col{1.0, 2.0, 3.0, 4.0};
  LatticeDim d = build_quantile_bins("x", col, 2);
  REQUIRE(d.levels == 2);
  REQUIRE(d.edges.size() == 1);
  CHECK(d.edges[0] == doctest::Approx(2.5));

  std::vector<double> eight{1, 2, 3, 4, 5, 6, 7, 8};
  LatticeDim q = build_quantile_bins("x", eight, 4);
  REQUIRE(q.levels == 4);
  REQUIRE(q.edges.size() == 3);
  CHECK(q.edges[0] == doctest::Approx(2.5));
  CHECK(q.edges[1] == doctest::Approx(4.5));
  CHECK(q.edges[2] == doctest::Approx(6.5));
}

TEST_CASE("quantile bins: ties collapse duplicate edges") {
  // heavy tie mass at 1.0 pushes several quantiles onto the same edge
  std::vector<double> col{1, 1, 1, 1, 1, 2, 3, 4};
  LatticeDim d = build_quantile_bins("x", col, 4);
  CHECK(d.levels < 4);
  for (std::size_t k = 1; k < d.edges.size(); ++k)
    CHECK(d.edges[k - 1] < d.edges[k]);
}

TEST_CASE("quantile bins: too few distinct values is degenerate") {
  std::vector<double> col{1.0, 1.0, 2.0, 2.0};
  CHECK(thrown_code([&] { build_quantile_bins("x", col, 3); }) ==
        ErrorCode::degenerate_binning);
  std::vector<double> bad{1.0, std::nan("")};
  CHECK(thrown_code([&] { build_quantile_bins("x", bad, 2); }) ==
        ErrorCode::ingest_error);
}

TEST_CASE("explicit bins: edges must be finite and strictly increasing") {
  LatticeDim ok = build_explicit_bins("x", {0.0, 1.0, 2.0});
  CHECK(ok.levels == 4);
  CHECK(thrown_code([] { build_explicit_bins("x", {1.0, 1.0}); }) ==
        ErrorCode::degenerate_binning);
  CHECK(thrown_code([] { build_explicit_bins("x", {2.0, 1.0}); }) ==
        ErrorCode::degenerate_binning);
  CHECK(thrown_code([] {
          build_explicit_bins("x", {0.0, std::numeric_limits<double>::infinity()});
        }) == ErrorCode::degenerate_binning);
}

TEST_CASE("level assignment: edges belong to the upper bin") {
  LatticeDim d = build_explicit_bins("x", {0.0, 1.0});
  CHECK(assign_level(d, LatticeValue{-0.5}) == 0);
  CHECK(assign_level(d, LatticeValue{0.0}) == 1);
  CHECK(assign_level(d, LatticeValue{0.5}) == 1);
  CHECK(assign_level(d, LatticeValue{1.0}) == 2);
  CHECK(assign_level(d, LatticeValue{7.0}) == 2);
  CHECK(thrown_code([&] { assign_level(d, LatticeValue{std::string("a")}); }) ==
        ErrorCode::missing_lattice_feature);
}

TEST_CASE("categorical dims: labels resolve, duplicates and strangers fail") {
  LatticeDim d = build_categorical_dim("color", {"red", "green", "blue"});
  CHECK(assign_level(d, LatticeValue{std::string("green")}) == 1);
  CHECK(thrown_code([&] {
          assign_level(d, LatticeValue{std::string("mauve")});
        }) == ErrorCode::unknown_level);
  CHECK(thrown_code([] { build_categorical_dim("c", {"a", "a"}); }) ==
        ErrorCode::degenerate_binning);
}

TEST_CASE("flat indexing: row-major with the last dim fastest") {
  LatticeSpec spec = testutil::grid({2, 3});
  CHECK(spec.cell_count() == 6);
  CellIndex c;
  c.kappa = {1, 2};
  CHECK(spec.flat_index(c) == 5);
  c.kappa = {1, 0};
  CHECK(spec.flat_index(c) == 3);
  for (std::int64_t f = 0; f < spec.cell_count(); ++f)
    CHECK(spec.flat_index(spec.from_flat(f)) == f);

  c.kappa = {2, 0};
  CHECK(thrown_code([&] { spec.flat_index(c); }) == ErrorCode::unknown_level);
  CHECK(thrown_code([&] { spec.from_flat(6); }) == ErrorCode::unknown_level);
  c.kappa = {0};
  CHECK(thrown_code([&] { spec.flat_index(c); }) == ErrorCode::dimension_error);
}

TEST_CASE("assign_cell: rows need every lattice feature") {
  LatticeSpec spec = testutil::grid({2, 2});
  LatticeRow row;
  row["g0"] = LatticeValue{std::string("1")};
  row["g1"] = LatticeValue{std::string("0")};
  CellIndex c = assign_cell(row, spec);
  CHECK(spec.flat_index(c) == 2);
  row.erase("g1");
  CHECK(thrown_code([&] { assign_cell(row, spec); }) ==
        ErrorCode::missing_lattice_feature);
}

TEST_CASE("max_bins: worked values and the safety factor") {
  CHECK(max_bins(1000, 1, 3) == 10);
  CHECK(max_bins(1000, 1, 5) == 3);
  CHECK(max_bins(1000, 1, 3, 0.5) == 5);
  CHECK(max_bins(1000, 2, 1) == 500);
  // N/p = 1000 exactly at the boundary 10^3 = 1000 must not lose the floor
  CHECK(max_bins(8000, 1, 3) == 20);
  CHECK(thrown_code([] { max_bins(10, 10, 2); }) ==
        ErrorCode::infeasible_lattice);
  CHECK(thrown_code([] { max_bins(100, 1, 2, 1.5); }) ==
        ErrorCode::config_error);
  CHECK(thrown_code([] { max_bins(100, 1, 0); }) == ErrorCode::dimension_error);
}

TEST_CASE("bin budget ratio and refinement feasibility") {
  CHECK(bin_budget_ratio(1000, 2, 3, 5) == doctest::Approx(0.25));
  CHECK(feasible_refinement(100, 2, 20));
  CHECK_FALSE(feasible_refinement(30, 2, 20));
  CHECK(feasible_refinement(40, 2, 20));  // boundary is inclusive
}

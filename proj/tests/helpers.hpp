// helpers.hpp -- shared scaffolding for the unit tests.
#pragma once

#include <Eigen/Dense>
#include <random>
#include <utility>
#include <vector>

#include "hlglm/data.hpp"
#include "hlglm/errors.hpp"
#include "hlglm/lattice.hpp"

namespace testutil {

// Runs f and reports which error class it threw (ok = none).
template <typename F>
hlglm::ErrorCode thrown_code(F&& f) {
  try {
    std::forward<F>(f)();
  } catch (const hlglm::Error& e) {
    return e.code();
  }
  return hlglm::ErrorCode::ok;
}

inline hlglm::LatticeSpec grid(std::vector<int> levels) {
  std::vector<hlglm::LatticeDim> dims;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    std::vector<std::string> labels;
    for (int l = 0; l < levels[i]; ++l) labels.push_back(std::to_string(l));
    dims.push_back(hlglm::build_categorical_dim("g" + std::to_string(i),
                                                std::move(labels)));
  }
  return hlglm::LatticeSpec(std::move(dims));
}

// Dataset with given flat cell ids on a lattice, explicit ones column plus
// optional standard-normal feature columns, and caller-supplied response.
inline hlglm::Dataset dataset_on(const hlglm::LatticeSpec& spec,
                                 const std::vector<std::int64_t>& flat_cells,
                                 Eigen::VectorXd y, int features = 0,
                                 std::uint64_t seed = 0) {
  hlglm::Dataset d;
  const auto n = static_cast<std::int64_t>(flat_cells.size());
  d.X = Eigen::MatrixXd::Ones(n, 1 + features);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int j = 1; j <= features; ++j)
    for (std::int64_t i = 0; i < n; ++i) d.X(i, j) = z(rng);
  d.y = std::move(y);
  d.columns.push_back("intercept");
  for (int j = 1; j <= features; ++j)
    d.columns.push_back("x" + std::to_string(j));
  for (auto f : flat_cells) d.cells.push_back(spec.from_flat(f));
  return d;
}

}  // namespace testutil

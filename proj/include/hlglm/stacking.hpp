// stacking.hpp -- local ensembling of base-model linear predictors: per-cell
// softmax weights built from a decomposed parameter (one coefficient column
// per base model), a leverage-inflated leave-one-out objective, and a
// gradient fit for the weight parameters.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "hlglm/decomposition.hpp"
#include "hlglm/fit.hpp"
#include "hlglm/glm.hpp"
#include "hlglm/lattice.hpp"

namespace hlglm {

struct StackingModel {
  LatticeSpec lattice;
  DecomposedParameter weights;  // coef_dim = number of base models
  FamilySpec family;

  int model_count() const { return weights.coef_dim(); }
};

// Softmax over the materialized weight logits of one cell; nonnegative,
// sums to 1, invariant to a constant shift of all columns.
Eigen::VectorXd stack_weights(const StackingModel& sm, const CellIndex& cell);

// Row-wise weighted sums of base linear predictors (mixing happens in
// predictor space, keeping the ensemble in the same model class).
Eigen::VectorXd ensemble_eta(const StackingModel& sm,
                             const Eigen::MatrixXd& base_logits,
                             std::span<const CellIndex> cells);

// Approximate per-observation influence of fitting M models' weights in a
// cell holding n_cell observations, capped below 1.
double leverage(int model_count, std::int64_t n_cell, double cap = 0.9);

struct StackingConfig {
  int truncation = 1;       // weight decomposition order
  double leverage_cap = 0.9;
  double ridge = 1e-6;      // fixes the softmax shift direction
  FitConfig opt;            // optimizer settings (truncation fields unused)
};

struct StackingFit {
  StackingModel model;
  double loo_loss = 0.0;  // objective value at the fitted weights
  int steps = 0;
  bool converged = false;
};

// Leverage-weighted LOO objective at given weights:
// (1/N) sum_n nll(y_n, eta_ens_n) / (1 - h_n) + ridge * ||v||^2.
double stacking_loss(const StackingModel& sm,
                     const Eigen::MatrixXd& base_logits,
                     const Eigen::VectorXd& y,
                     std::span<const CellIndex> cells, double leverage_cap,
                     double ridge);

StackingFit fit_stacking(const Eigen::MatrixXd& base_logits,
                         const Eigen::VectorXd& y,
                         std::span<const CellIndex> cells,
                         const LatticeSpec& lattice, const FamilySpec& family,
                         const StackingConfig& cfg = {});

}  // namespace hlglm

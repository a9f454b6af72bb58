// fit.hpp -- penalized MAP fitting of a decomposed piecewise GLM, curvature
// blocks for the posterior approximation, and the adaptive Fisher-weight
// outer loop for non-gaussian families.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "hlglm/data.hpp"
#include "hlglm/decomposition.hpp"
#include "hlglm/glm.hpp"
#include "hlglm/lattice.hpp"
#include "hlglm/regularization.hpp"

namespace hlglm {

struct LrSchedule {
  double start = 1e-3;
  double peak = 2e-2;
  double end = 1e-3;
  double warmup_fraction = 0.1;  // linear ramp, then cosine decay
};

double lr_at(const LrSchedule& s, int step, int max_steps);

struct FitConfig {
  int truncation = 1;            // order K for both decompositions
  int truncation_intercept = -1; // >= 0 overrides `truncation`
  int truncation_coeff = -1;
  int max_steps = 3000;
  LrSchedule lr;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double tol = 1e-7;    // relative loss change declaring convergence
  int patience = 5;     // consecutive small changes required
  std::uint64_t seed = 0;
  int batch = 0;        // 0 = full batch (deterministic); >0 = minibatch size

  int k_intercept() const {
    return truncation_intercept >= 0 ? truncation_intercept : truncation;
  }
  int k_coeff() const {
    return truncation_coeff >= 0 ? truncation_coeff : truncation;
  }
};

struct FitDiagnostics {
  double final_loss = 0.0;
  double train_nll = 0.0;
  double penalty = 0.0;
  int steps = 0;
  bool converged = false;
  std::vector<double> df_intercept;  // df_eff per component (summed combos)
  std::vector<double> df_coeff;
  double df_total = 0.0;
};

struct FisherState {
  // mean Fisher weight per component level-combination, both parts
  std::vector<Eigen::VectorXd> intercept_wbar, coeff_wbar;
  double global_wbar = 0.0;
  int iterations = 0;     // outer reweighting iterations performed
  double last_delta = 0.0;
  bool converged = true;
};

struct FittedModel {
  LatticeSpec lattice;
  DecomposedParameter intercept;  // coef_dim 1, fits against the ones column
  DecomposedParameter coeff;      // coef_dim = feature count (may be 0)
  FamilySpec family;
  RegularizationPlan plan;
  FisherState fisher;
  FitDiagnostics diag;
};

// Penalized negative log-likelihood MAP fit with Adam under a warmup/cosine
// schedule. Initial tensors arrive by value (zeros for a cold start, a
// warm-started decomposition otherwise) and fix the shapes. `data.cells`
// must already be bound to `lattice`.
FittedModel map_fit(const Dataset& data, const LatticeSpec& lattice,
                    const FamilySpec& family, const RegularizationPlan& plan,
                    const FitConfig& cfg, DecomposedParameter intercept_init,
                    DecomposedParameter coeff_init);

// Zero-initialized shapes for a config (intercept coef_dim 1, coeff
// coef_dim = data features).
std::pair<DecomposedParameter, DecomposedParameter> make_shapes(
    const LatticeSpec& lattice, int feature_count, const FitConfig& cfg);

struct Predictions {
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;
};

Eigen::VectorXd predict_eta(const FittedModel& m, const Eigen::MatrixXd& X,
                            std::span<const CellIndex> cells);
Predictions predict(const FittedModel& m, const Dataset& data);

// Mean nll per observation on a dataset (test loss in likelihood units).
double mean_nll(const FittedModel& m, const Dataset& data);

// Loss and gradient of the penalized objective at arbitrary parameter
// values; exposed for direct optimization checks.
double penalized_loss_grad(const Dataset& data, const FamilySpec& family,
                           const RegularizationPlan& plan,
                           const DecomposedParameter& intercept,
                           const DecomposedParameter& coeff,
                           const CellBinding& bind_int,
                           const CellBinding& bind_coef,
                           std::vector<Eigen::MatrixXd>* grad_int,
                           std::vector<Eigen::MatrixXd>* grad_coef);

// Per-(component, level combination) curvature blocks at the MAP point:
// precision = X_block' W X_block + tau^-2 I, stored as Cholesky factors.
struct LaplacePosterior {
  std::vector<std::vector<Eigen::MatrixXd>> intercept_chol;  // [comp][combo]
  std::vector<std::vector<Eigen::MatrixXd>> coeff_chol;
};

LaplacePosterior laplace_posterior(const FittedModel& m, const Dataset& data);

// Covariance of one block (inverse of the stored precision), for reporting.
Eigen::MatrixXd laplace_block_cov(const LaplacePosterior& lp, bool intercept,
                                  int comp, std::int64_t combo);

// Gaussian noise scale from an order-0 ridge fit; non-gaussian families map
// the mean Fisher weight to an effective scale 1/sqrt(wbar).
double estimate_sigma(const Dataset& data, const FamilySpec& family);

struct AdaptiveOptions {
  int max_outer = 10;
  double tol = 1e-4;  // max |wbar^t - wbar^{t-1}| across combos
  PlanOptions plan;
  bool error_on_nonconvergence = true;
};

// One-stop fit: gaussian gets a scaled plan at the estimated sigma (single
// pass); other families iterate fit <-> Fisher weights until the weights
// settle. The returned model carries the final plan and Fisher state.
FittedModel fit_adaptive(const Dataset& data, const LatticeSpec& lattice,
                         const FamilySpec& family, const FitConfig& cfg,
                         const AdaptiveOptions& opt = {});

}  // namespace hlglm

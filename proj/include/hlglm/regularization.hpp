// regularization.hpp -- shrinkage/df algebra and the per-component prior
// scale plan used by the MAP fit. The scaled plan keeps each added
// component's effective degrees of freedom at or below 1/2 (per-component
// mode) or p/2 (per-parameter mode) regardless of how thin its cells are.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "hlglm/decomposition.hpp"
#include "hlglm/lattice.hpp"

namespace hlglm {

// Posterior mean multiplier for one parameter seen by n observations of
// noise sigma under a zero-mean prior of scale tau.
double shrinkage(double n, double tau, double sigma);

// Prior scale bound keeping a p-coefficient component at df <= 1/2.
double tau_gaussian(double sigma, int p, double n_alpha);

// Same bound with the curvature of a non-gaussian likelihood folded in via
// the mean Fisher weight; gaussian reduces to tau_gaussian with wbar=1/s^2.
double tau_glm(int p, double wbar, double n_alpha);

// trace[(X'WX + tau^-2 I)^-1 X'WX] via a symmetric solve. `w` holds one
// nonnegative weight per row. tau may be +inf (no penalty -> df = rank side).
double df_eff_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                    double tau);

// Strict aggregate condition for cell-varying coefficients to beat a pooled
// fit: sum_g N_g ||beta_g||^2 / (2 sigma^2) > G p / 2.
bool signal_improvement_check(std::span<const double> group_beta_sq,
                              std::span<const std::int64_t> group_n, int p,
                              double sigma);

enum class PenaltyMode { per_parameter, per_component };

struct ComponentPenalty {
  Eigen::VectorXd tau;               // per level combination; +inf means free
  std::vector<std::uint8_t> empty;   // combos with no observations (floored)
};

struct PartPlan {
  std::vector<ComponentPenalty> comps;  // aligned with decomposition order
};

struct RegularizationPlan {
  PartPlan intercept;
  PartPlan coeff;
  PenaltyMode mode = PenaltyMode::per_component;
  double sigma = 1.0;  // scale the plan was built at (reporting only)
};

// Options shared by the scaled builders. The order-0 components form the
// baseline model (global intercept and global slopes); the df<=1/2 bound is
// derived for terms *added* to that baseline under a null effect, so by
// default order 0 sits on a weak reference prior instead.
struct PlanOptions {
  PenaltyMode mode = PenaltyMode::per_component;
  bool exempt_order0 = true;
  double reference_tau_scale = 100.0;  // order-0 tau = scale * sigma
};

// Gaussian scaling: tau(alpha, combo) from each combo's realized count.
// Empty combos are floored at the global-N bound so they stay pinned to the
// prior mean.
RegularizationPlan build_scaled_plan(const DecomposedParameter& intercept,
                                     const DecomposedParameter& coeff,
                                     std::span<const CellIndex> cells,
                                     const LatticeSpec& lattice, double sigma,
                                     const PlanOptions& opt = {});

// Fisher-weighted scaling for non-gaussian families: takes the mean weight
// per combo (same layout as the plan) plus a global fallback for empties.
RegularizationPlan build_glm_plan(const DecomposedParameter& intercept,
                                  const DecomposedParameter& coeff,
                                  std::span<const CellIndex> cells,
                                  const LatticeSpec& lattice,
                                  const std::vector<Eigen::VectorXd>& wbar_int,
                                  const std::vector<Eigen::VectorXd>& wbar_coef,
                                  double wbar_global,
                                  const PlanOptions& opt = {});

// Reference schemes for comparisons.
RegularizationPlan build_fixed_plan(const DecomposedParameter& intercept,
                                    const DecomposedParameter& coeff,
                                    double tau);
// tau(order k) = base * rate^k
RegularizationPlan build_decay_plan(const DecomposedParameter& intercept,
                                    const DecomposedParameter& coeff,
                                    double base, double rate);
RegularizationPlan build_free_plan(const DecomposedParameter& intercept,
                                   const DecomposedParameter& coeff);

// Quadratic penalty sum_alpha ||theta^(alpha)||^2 / (2 tau_alpha^2) and its
// gradient contribution are evaluated in the fit; this validates alignment.
void check_plan_shape(const RegularizationPlan& plan,
                      const DecomposedParameter& intercept,
                      const DecomposedParameter& coeff);

}  // namespace hlglm

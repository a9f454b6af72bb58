#include "hlglm/regularization.hpp"

#include <cmath>
#include <limits>

#include "hlglm/errors.hpp"

namespace hlglm {

double shrinkage(double n, double tau, double sigma) {
  if (!(tau > 0.0)) fail(ErrorCode::numerical_error, "shrinkage: tau <= 0");
  if (!(sigma > 0.0)) fail(ErrorCode::numerical_error, "shrinkage: sigma <= 0");
  if (n < 0.0) fail(ErrorCode::numerical_error, "shrinkage: negative n");
  if (std::isinf(tau)) return n > 0.0 ? 1.0 : 0.0;
  double nt2 = n * tau * tau;
  return nt2 / (nt2 + sigma * sigma);
}

double tau_gaussian(double sigma, int p, double n_alpha) {
  if (!(sigma > 0.0)) fail(ErrorCode::numerical_error, "tau_gaussian: sigma <= 0");
  if (p < 1) fail(ErrorCode::dimension_error, "tau_gaussian: p < 1");
  if (!(n_alpha > 0.0))
    fail(ErrorCode::numerical_error, "tau_gaussian: n_alpha <= 0");
  return sigma / std::sqrt(2.0 * static_cast<double>(p) * n_alpha);
}

double tau_glm(int p, double wbar, double n_alpha) {
  if (p < 1) fail(ErrorCode::dimension_error, "tau_glm: p < 1");
  if (!(wbar > 0.0)) fail(ErrorCode::numerical_error, "tau_glm: wbar <= 0");
  if (!(n_alpha > 0.0)) fail(ErrorCode::numerical_error, "tau_glm: n_alpha <= 0");
  return 1.0 / std::sqrt(2.0 * static_cast<double>(p) * wbar * n_alpha);
}

double df_eff_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                    double tau) {
  const auto p = X.cols();
  if (w.size() != X.rows())
    fail(ErrorCode::dimension_error, "df_eff_ridge: weight length != rows");
  if (!(tau > 0.0)) fail(ErrorCode::numerical_error, "df_eff_ridge: tau <= 0");
  if (p == 0) return 0.0;

  Eigen::MatrixXd a = X.transpose() * w.asDiagonal() * X;
  double prior_precision = std::isinf(tau) ? 0.0 : 1.0 / (tau * tau);
  Eigen::MatrixXd m = a;
  m.diagonal().array() += prior_precision;
  Eigen::LDLT<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success)
    fail(ErrorCode::numerical_error, "df_eff_ridge: factorization failed");
  double df = solver.solve(a).trace();
  if (!std::isfinite(df))
    fail(ErrorCode::numerical_error, "df_eff_ridge: non-finite trace");
  return df;
}

bool signal_improvement_check(std::span<const double> group_beta_sq,
                              std::span<const std::int64_t> group_n, int p,
                              double sigma) {
  if (group_beta_sq.size() != group_n.size())
    fail(ErrorCode::dimension_error,
         "signal_improvement_check: group arity mismatch");
  if (!(sigma > 0.0))
    fail(ErrorCode::numerical_error, "signal_improvement_check: sigma <= 0");
  double lhs = 0.0;
  for (std::size_t g = 0; g < group_n.size(); ++g)
    lhs += static_cast<double>(group_n[g]) * group_beta_sq[g];
  lhs /= 2.0 * sigma * sigma;
  double rhs = static_cast<double>(group_n.size()) * static_cast<double>(p) / 2.0;
  return lhs > rhs;
}

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

PartPlan zero_shaped_part(const DecomposedParameter& dp, double fill) {
  PartPlan part;
  part.comps.resize(static_cast<std::size_t>(dp.component_count()));
  for (int i = 0; i < dp.component_count(); ++i) {
    auto& cp = part.comps[static_cast<std::size_t>(i)];
    cp.tau = Eigen::VectorXd::Constant(dp.combo_count(i), fill);
    cp.empty.assign(static_cast<std::size_t>(dp.combo_count(i)), 0);
  }
  return part;
}

// Shared scaled-plan core. tau_of(p_eff, n, i_comp, combo) supplies the bound
// for occupied combos; empty combos take tau floored at the global-N bound.
template <typename TauFn>
PartPlan scaled_part(const DecomposedParameter& dp,
                     std::span<const CellIndex> cells,
                     const LatticeSpec& lattice, const PlanOptions& opt,
                     double reference_tau, TauFn tau_of) {
  PartPlan part;
  part.comps.resize(static_cast<std::size_t>(dp.component_count()));
  const int p_eff = dp.coef_dim() > 0 ? dp.coef_dim() : 1;
  const auto n_total = static_cast<double>(cells.size());
  for (int i = 0; i < dp.component_count(); ++i) {
    const ComponentId& id = dp.component(i);
    ComponentStats st = component_stats(cells, id, lattice);
    auto& cp = part.comps[static_cast<std::size_t>(i)];
    cp.tau.resize(dp.combo_count(i));
    cp.empty.assign(static_cast<std::size_t>(dp.combo_count(i)), 0);
    if (id.order() == 0 && opt.exempt_order0) {
      cp.tau.setConstant(reference_tau);
      continue;
    }
    const double tau_floor = tau_of(p_eff, n_total);
    for (std::int64_t c = 0; c < cp.tau.size(); ++c) {
      auto n_c = static_cast<double>(st.counts[static_cast<std::size_t>(c)]);
      if (n_c <= 0.0) {
        cp.tau[c] = tau_floor;
        cp.empty[static_cast<std::size_t>(c)] = 1;
      } else {
        cp.tau[c] = tau_of(p_eff, n_c);
      }
    }
  }
  return part;
}

}  // namespace

RegularizationPlan build_scaled_plan(const DecomposedParameter& intercept,
                                     const DecomposedParameter& coeff,
                                     std::span<const CellIndex> cells,
                                     const LatticeSpec& lattice, double sigma,
                                     const PlanOptions& opt) {
  if (cells.empty()) fail(ErrorCode::empty_data, "build_scaled_plan: no cells");
  if (!(sigma > 0.0))
    fail(ErrorCode::numerical_error, "build_scaled_plan: sigma <= 0");
  RegularizationPlan plan;
  plan.mode = opt.mode;
  plan.sigma = sigma;
  const double ref = opt.reference_tau_scale * sigma;
  auto tau_of = [&](int p, double n) {
    return opt.mode == PenaltyMode::per_component ? tau_gaussian(sigma, p, n)
                                                  : sigma / std::sqrt(n);
  };
  plan.intercept = scaled_part(intercept, cells, lattice, opt, ref, tau_of);
  plan.coeff = scaled_part(coeff, cells, lattice, opt, ref, tau_of);
  return plan;
}

RegularizationPlan build_glm_plan(const DecomposedParameter& intercept,
                                  const DecomposedParameter& coeff,
                                  std::span<const CellIndex> cells,
                                  const LatticeSpec& lattice,
                                  const std::vector<Eigen::VectorXd>& wbar_int,
                                  const std::vector<Eigen::VectorXd>& wbar_coef,
                                  double wbar_global, const PlanOptions& opt) {
  if (cells.empty()) fail(ErrorCode::empty_data, "build_glm_plan: no cells");
  if (!(wbar_global > 0.0))
    fail(ErrorCode::numerical_error, "build_glm_plan: wbar_global <= 0");
  if (static_cast<int>(wbar_int.size()) != intercept.component_count() ||
      static_cast<int>(wbar_coef.size()) != coeff.component_count())
    fail(ErrorCode::dimension_error, "build_glm_plan: wbar layout mismatch");

  const double sigma_eff = 1.0 / std::sqrt(wbar_global);
  RegularizationPlan plan;
  plan.mode = opt.mode;
  plan.sigma = sigma_eff;
  const double ref = opt.reference_tau_scale * sigma_eff;

  auto build = [&](const DecomposedParameter& dp,
                   const std::vector<Eigen::VectorXd>& wbar) {
    auto idx = [&](int i) { return static_cast<std::size_t>(i); };
    PartPlan part;
    part.comps.resize(static_cast<std::size_t>(dp.component_count()));
    const int p_eff = dp.coef_dim() > 0 ? dp.coef_dim() : 1;
    const auto n_total = static_cast<double>(cells.size());
    for (int i = 0; i < dp.component_count(); ++i) {
      const ComponentId& id = dp.component(i);
      ComponentStats st = component_stats(cells, id, lattice);
      if (wbar[idx(i)].size() != dp.combo_count(i))
        fail(ErrorCode::dimension_error, "build_glm_plan: wbar combo mismatch");
      auto& cp = part.comps[idx(i)];
      cp.tau.resize(dp.combo_count(i));
      cp.empty.assign(static_cast<std::size_t>(dp.combo_count(i)), 0);
      if (id.order() == 0 && opt.exempt_order0) {
        cp.tau.setConstant(ref);
        continue;
      }
      const double tau_floor =
          opt.mode == PenaltyMode::per_component
              ? tau_glm(p_eff, wbar_global, n_total)
              : 1.0 / std::sqrt(wbar_global * n_total);
      for (std::int64_t c = 0; c < cp.tau.size(); ++c) {
        auto n_c = static_cast<double>(st.counts[static_cast<std::size_t>(c)]);
        double w_c = wbar[idx(i)][c];
        if (n_c <= 0.0 || !(w_c > 0.0)) {
          cp.tau[c] = tau_floor;
          cp.empty[static_cast<std::size_t>(c)] = 1;
        } else {
          cp.tau[c] = opt.mode == PenaltyMode::per_component
                          ? tau_glm(p_eff, w_c, n_c)
                          : 1.0 / std::sqrt(w_c * n_c);
        }
      }
    }
    return part;
  };

  plan.intercept = build(intercept, wbar_int);
  plan.coeff = build(coeff, wbar_coef);
  return plan;
}

RegularizationPlan build_fixed_plan(const DecomposedParameter& intercept,
                                    const DecomposedParameter& coeff,
                                    double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::numerical_error, "build_fixed_plan: tau <= 0");
  RegularizationPlan plan;
  plan.intercept = zero_shaped_part(intercept, tau);
  plan.coeff = zero_shaped_part(coeff, tau);
  return plan;
}

RegularizationPlan build_decay_plan(const DecomposedParameter& intercept,
                                    const DecomposedParameter& coeff,
                                    double base, double rate) {
  if (!(base > 0.0) || !(rate > 0.0))
    fail(ErrorCode::numerical_error, "build_decay_plan: base/rate <= 0");
  RegularizationPlan plan;
  auto fill = [&](const DecomposedParameter& dp) {
    PartPlan part = zero_shaped_part(dp, base);
    for (int i = 0; i < dp.component_count(); ++i)
      part.comps[static_cast<std::size_t>(i)].tau.setConstant(
          base * std::pow(rate, dp.component(i).order()));
    return part;
  };
  plan.intercept = fill(intercept);
  plan.coeff = fill(coeff);
  return plan;
}

RegularizationPlan build_free_plan(const DecomposedParameter& intercept,
                                   const DecomposedParameter& coeff) {
  RegularizationPlan plan;
  plan.intercept = zero_shaped_part(intercept, inf);
  plan.coeff = zero_shaped_part(coeff, inf);
  return plan;
}

void check_plan_shape(const RegularizationPlan& plan,
                      const DecomposedParameter& intercept,
                      const DecomposedParameter& coeff) {
  auto check_part = [](const PartPlan& part, const DecomposedParameter& dp,
                       const char* which) {
    if (static_cast<int>(part.comps.size()) != dp.component_count())
      fail(ErrorCode::dimension_error,
           std::string("plan/") + which + ": component count mismatch");
    for (int i = 0; i < dp.component_count(); ++i) {
      const auto& cp = part.comps[static_cast<std::size_t>(i)];
      if (cp.tau.size() != dp.combo_count(i))
        fail(ErrorCode::dimension_error,
             std::string("plan/") + which + ": combo count mismatch");
      for (std::int64_t c = 0; c < cp.tau.size(); ++c)
        if (!(cp.tau[c] > 0.0))
          fail(ErrorCode::numerical_error,
               std::string("plan/") + which + ": tau must be positive");
    }
  };
  check_part(plan.intercept, intercept, "intercept");
  check_part(plan.coeff, coeff, "coeff");
}

}  // namespace hlglm

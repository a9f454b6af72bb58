// evaluation.hpp -- WAIC scoring from posterior draws, generalization gaps
// across truncation orders, and the flow quantities (critical order, SNR,
// decay-rate estimate, correlation length, ridge-df prediction).
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "hlglm/fit.hpp"

namespace hlglm {

struct WaicReport {
  double lppd_term = 0.0;     // -sum_n log mean_s f(y_n | theta_s)
  double penalty_term = 0.0;  // sum_n var_s[log f(y_n | theta_s)]
  double total = 0.0;         // lppd_term + penalty_term
  Eigen::VectorXd per_obs_lppd;  // log mean_s f per observation
  Eigen::VectorXd per_obs_var;   // sample variance of log f per observation
  int draws = 0;
};

// Score a fitted model on `data` from `draws` samples of its block posterior
// approximation. Streaming accumulation: one pass over draws, no draw matrix
// is materialized. Deterministic given the seed.
WaicReport waic(const FittedModel& m, const Dataset& data, int draws = 1000,
                std::uint64_t seed = 0);

// Differences S_K - S_{K-1} for a score sequence indexed by contiguous
// orders starting at 0; result has one fewer entry.
std::vector<double> generalization_gap(std::span<const double> s_by_order);

// Order at which the per-component signal-to-noise ratio crosses 1 under
// geometric effect decay: log(N/sigma^2) / log(L/rho). Real-valued; callers
// bracket with the neighboring integers.
double critical_order(double n, double sigma2, double levels, double rho);

// N rho^K / (sigma^2 L^K); equals 1 at the real-valued critical order.
double snr_at_order(double n, double rho, double sigma2, double levels,
                    double k);

// Decay-rate estimate: ratio of mean squared order-1 tensor entries to mean
// squared order-0 entries, pooled over both decomposition parts. `fits`
// holds fits at contiguous orders from 0; order-0 entries come from fits[0]
// and order-1 entries from the first fit of truncation >= 1.
double estimate_rho(std::span<const FittedModel> fits);

// Raw sums feeding estimate_rho, exposed so replications can be pooled
// before taking the ratio.
struct EffectScales {
  double sum_sq_order0 = 0.0;
  std::int64_t n_order0 = 0;
  double sum_sq_order1 = 0.0;
  std::int64_t n_order1 = 0;
};

EffectScales effect_scales(const FittedModel& order0_fit,
                           const FittedModel& order1_fit);

// Transition width in scale units: 2 / (C(d,K*) L^{K*} log(L/rho)).
double correlation_length(int d, int kstar, double levels, double rho);

// Ridge effective df predicted for an i.i.d. random design: p N lambda^2 /
// (N lambda^2 + sigma^2).
double replica_df(int p, double n, double lambda2, double sigma2);

// Per-order score row plus the flow estimates, aggregated by the simulation
// harness and the order-selection command.
struct RgOrderRow {
  int order = 0;
  double waic_total = 0.0;
  double delta_s = 0.0;  // vs previous order; 0 at order 0
  double test_loss = 0.0;
};

struct RgFlowReport {
  std::vector<RgOrderRow> orders;
  double rho_hat = 0.0;
  double kstar = 0.0;        // real-valued
  int kstar_lo = 0;          // bracketing integers
  int kstar_hi = 0;
  double xi = 0.0;           // correlation length at the rounded bracket
  bool flow_defined = false; // false when rho_hat leaves (0, L)
};

}  // namespace hlglm

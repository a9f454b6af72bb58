// simulate.hpp -- synthetic lattice data with geometrically decaying
// interaction effects, plus the three study harnesses: regularization-scheme
// comparison, order-sweep flow measurement, and the random-design df check.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hlglm/data.hpp"
#include "hlglm/evaluation.hpp"
#include "hlglm/fit.hpp"

namespace hlglm {

struct SyntheticTruth {
  LatticeSpec lattice;
  DecomposedParameter intercept;  // true cell intercepts (coef_dim 1)
  DecomposedParameter coeff;      // true cell slopes (coef_dim p-1)
  double rho = 0.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset data;
  SyntheticTruth truth;
};

// d categorical dims of `levels` levels each, named g0..g{d-1}.
LatticeSpec uniform_lattice(int d, int levels);

// Cells uniform over the lattice; order-k effect entries i.i.d. normal with
// variance rho^k (order 0 has variance 1); features standard normal; response
// sampled from the family at eta. p counts design columns including the
// intercept column. truth_truncation < 0 means full order d.
SyntheticData gen_hierarchical(int d, int levels, std::int64_t n, double rho,
                               double sigma, int p, const FamilySpec& family,
                               std::uint64_t seed, int truth_truncation = -1);

// Bernoulli data with a fixed base rate: order-0 intercept pinned at
// logit(prevalence), order-1 effects N(0, effect_sd^2), no features.
SyntheticData gen_logistic_prevalence(int d, int levels, std::int64_t n,
                                      double prevalence, double effect_sd,
                                      std::uint64_t seed);

// Linear-predictor of the truth on a dataset's rows.
Eigen::VectorXd truth_eta(const SyntheticTruth& truth, const Dataset& data);

// First n_head rows / remaining rows, preserving order.
std::pair<Dataset, Dataset> split_head(const Dataset& data,
                                       std::int64_t n_head);

// ---- regularization scheme comparison -----------------------------------

struct RegCompareConfig {
  int d = 3;
  int levels = 4;
  std::int64_t n_train = 10000;
  std::int64_t n_test = 10000;
  double rho = 0.3;
  double sigma = 1.0;
  int p = 1;
  int kmax = 2;
  int replications = 20;
  std::uint64_t seed = 0;
  FitConfig fit;
};

struct MetricCell {
  double mean = 0.0;
  double se = 0.0;
  std::vector<double> per_rep;
};

struct RegComparisonResult {
  std::vector<std::string> schemes;                // row labels
  std::vector<std::vector<MetricCell>> improvement;  // [scheme][order]
  RegCompareConfig config;
};

// Mean test log-likelihood improvement over the unregularized fit, per
// scheme and truncation order: unregularized, fixed tau=1, decaying
// tau_k = 5 * 0.9^k, and the df-bounded scaled plan.
RegComparisonResult run_regularization_comparison(const RegCompareConfig& cfg);

// ---- order sweep / flow measurement --------------------------------------

struct RgFlowConfig {
  int d = 3;
  int levels = 4;
  std::int64_t n_train = 10000;
  std::int64_t n_test = 10000;
  double rho = 0.3;
  double sigma = 1.0;
  int p = 1;
  int kmax = 2;
  int replications = 20;
  int waic_draws = 1000;
  std::uint64_t seed = 0;
  FitConfig fit;
};

struct RgFlowRep {
  std::vector<double> waic;       // per order
  std::vector<double> test_loss;  // mean nll per order
  std::vector<double> delta;      // waic differences, length kmax
  EffectScales scales;
  double sigma_hat = 0.0;
};

struct RgFlowResult {
  std::vector<RgFlowRep> reps;
  RgFlowReport aggregate;               // mean scores, pooled rho, K* bracket
  std::vector<double> frac_delta_neg;   // share of reps with delta_K < 0
  double frac_ordered = 0.0;            // share with test loss decreasing in K
  RgFlowConfig config;
};

RgFlowResult run_rg_flow(const RgFlowConfig& cfg);

// ---- random-design df check ----------------------------------------------

struct ReplicaCheck {
  double predicted = 0.0;  // p N lambda^2 / (N lambda^2 + sigma^2)
  double mc_mean = 0.0;
  double mc_stderr = 0.0;
  int draws = 0;
  double gamma = 0.0;       // p / N
  bool gamma_warning = false;
};

// Monte Carlo mean of the ridge df trace over standard-normal designs
// against the closed-form prediction.
ReplicaCheck run_replica_check(int p, std::int64_t n, double lambda2,
                               double sigma2, int draws, std::uint64_t seed);

}  // namespace hlglm

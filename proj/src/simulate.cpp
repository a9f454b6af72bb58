#include "hlglm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hlglm/decomposition.hpp"
#include "hlglm/errors.hpp"
#include "hlglm/regularization.hpp"
#include "hlglm/rng.hpp"

namespace hlglm {

namespace {

void fill_decayed(DecomposedParameter& dp, double rho, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  const auto& comps = dp.components();
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const double sd = std::pow(rho, 0.5 * comps[i].order());
    Eigen::MatrixXd& t = dp.tensor(static_cast<int>(i));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = sd * unit(rng);
  }
}

std::vector<CellIndex> draw_cells(const LatticeSpec& lattice, std::int64_t n,
                                  std::mt19937_64& rng) {
  std::vector<CellIndex> cells(static_cast<std::size_t>(n));
  const int d = lattice.dim_count();
  for (auto& cell : cells) {
    cell.kappa.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      std::uniform_int_distribution<int> pick(0, lattice.dim(j).levels - 1);
      cell.kappa[static_cast<std::size_t>(j)] = pick(rng);
    }
  }
  return cells;
}

Eigen::VectorXd eta_from(const DecomposedParameter& intercept,
                         const DecomposedParameter& coeff,
                         const Eigen::MatrixXd& X,
                         std::span<const CellIndex> cells) {
  const CellBinding bind_int = bind_cells(intercept, cells);
  const CellBinding bind_coef = bind_cells(coeff, cells);
  const std::int64_t n = static_cast<std::int64_t>(cells.size());
  const int f = static_cast<int>(coeff.coef_dim());
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < bind_int.size(); ++i) {
    const Eigen::MatrixXd& t = intercept.tensor(static_cast<int>(i));
    for (std::int64_t j = 0; j < n; ++j)
      eta[j] += t(bind_int[i][static_cast<std::size_t>(j)], 0);
  }
  if (f > 0) {
    for (std::size_t i = 0; i < bind_coef.size(); ++i) {
      const Eigen::MatrixXd& t = coeff.tensor(static_cast<int>(i));
      for (std::int64_t j = 0; j < n; ++j)
        eta[j] += t.row(bind_coef[i][static_cast<std::size_t>(j)])
                      .dot(X.row(j).segment(1, f));
    }
  }
  return eta;
}

void sample_response(const FamilySpec& family, const Eigen::VectorXd& eta,
                     double sigma, std::mt19937_64& rng, Eigen::VectorXd& y) {
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  y.resize(eta.size());
  switch (family.family) {
    case Family::gaussian:
      for (Eigen::Index j = 0; j < eta.size(); ++j)
        y[j] = eta[j] + sigma * unit(rng);
      break;
    case Family::bernoulli_logit:
      for (Eigen::Index j = 0; j < eta.size(); ++j)
        y[j] = coin(rng) < 1.0 / (1.0 + std::exp(-eta[j])) ? 1.0 : 0.0;
      break;
    case Family::poisson_log:
      for (Eigen::Index j = 0; j < eta.size(); ++j) {
        std::poisson_distribution<long> pois(std::exp(std::min(eta[j], 30.0)));
        y[j] = static_cast<double>(pois(rng));
      }
      break;
  }
}

std::vector<std::string> design_columns(int p) {
  std::vector<std::string> cols;
  cols.reserve(static_cast<std::size_t>(p));
  cols.push_back("intercept");
  for (int j = 1; j < p; ++j) cols.push_back("x" + std::to_string(j));
  return cols;
}

double mean_and_se(const std::vector<double>& v, double* se) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  *se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return mean;
}

}  // namespace

LatticeSpec uniform_lattice(int d, int levels) {
  if (d < 1) fail(ErrorCode::config_error, "lattice needs at least one dim");
  if (levels < 2)
    fail(ErrorCode::config_error, "lattice dims need at least two levels");
  std::vector<LatticeDim> dims;
  dims.reserve(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(levels));
    for (int l = 0; l < levels; ++l) labels.push_back(std::to_string(l));
    dims.push_back(build_categorical_dim("g" + std::to_string(j), labels));
  }
  return LatticeSpec(dims);
}

SyntheticData gen_hierarchical(int d, int levels, std::int64_t n, double rho,
                               double sigma, int p, const FamilySpec& family,
                               std::uint64_t seed, int truth_truncation) {
  if (n < 1) fail(ErrorCode::config_error, "need at least one row");
  if (p < 1) fail(ErrorCode::config_error, "design needs an intercept column");
  if (rho < 0.0) fail(ErrorCode::config_error, "rho must be non-negative");
  if (sigma <= 0.0 && family.family == Family::gaussian)
    fail(ErrorCode::config_error, "gaussian noise scale must be positive");
  SyntheticData out;
  out.truth.lattice = uniform_lattice(d, levels);
  out.truth.rho = rho;
  out.truth.sigma = sigma;
  out.truth.seed = seed;
  const int kt = truth_truncation < 0 ? d : truth_truncation;
  if (kt > d) fail(ErrorCode::invalid_truncation, "truth order exceeds dims");
  const std::vector<int> lv = out.truth.lattice.level_counts();
  out.truth.intercept = DecomposedParameter(lv, 1, kt);
  out.truth.coeff = DecomposedParameter(lv, p - 1, kt);

  auto rng_truth = make_rng(seed, 0);
  auto rng_cells = make_rng(seed, 1);
  auto rng_feat = make_rng(seed, 2);
  auto rng_noise = make_rng(seed, 3);
  fill_decayed(out.truth.intercept, rho, rng_truth);
  fill_decayed(out.truth.coeff, rho, rng_truth);

  out.data.cells = draw_cells(out.truth.lattice, n, rng_cells);
  out.data.X.resize(n, p);
  out.data.X.col(0).setOnes();
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::int64_t j = 0; j < n; ++j)
    for (int c = 1; c < p; ++c) out.data.X(j, c) = unit(rng_feat);
  out.data.columns = design_columns(p);

  const Eigen::VectorXd eta =
      eta_from(out.truth.intercept, out.truth.coeff, out.data.X,
               out.data.cells);
  sample_response(family, eta, sigma, rng_noise, out.data.y);
  return out;
}

SyntheticData gen_logistic_prevalence(int d, int levels, std::int64_t n,
                                      double prevalence, double effect_sd,
                                      std::uint64_t seed) {
  if (!(prevalence > 0.0 && prevalence < 1.0))
    fail(ErrorCode::config_error, "prevalence must lie in (0, 1)");
  if (effect_sd < 0.0)
    fail(ErrorCode::config_error, "effect scale must be non-negative");
  if (n < 1) fail(ErrorCode::config_error, "need at least one row");
  SyntheticData out;
  out.truth.lattice = uniform_lattice(d, levels);
  out.truth.rho = 0.0;
  out.truth.sigma = 1.0;
  out.truth.seed = seed;
  const std::vector<int> lv = out.truth.lattice.level_counts();
  out.truth.intercept = DecomposedParameter(lv, 1, 1);
  out.truth.coeff = DecomposedParameter(lv, 0, 1);

  auto rng_truth = make_rng(seed, 0);
  auto rng_cells = make_rng(seed, 1);
  auto rng_noise = make_rng(seed, 3);
  std::normal_distribution<double> unit(0.0, 1.0);
  out.truth.intercept.tensor(0)(0, 0) =
      std::log(prevalence / (1.0 - prevalence));
  for (std::size_t i = 1; i < out.truth.intercept.components().size(); ++i) {
    Eigen::MatrixXd& t = out.truth.intercept.tensor(static_cast<int>(i));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      t(r, 0) = effect_sd * unit(rng_truth);
  }

  out.data.cells = draw_cells(out.truth.lattice, n, rng_cells);
  out.data.X = Eigen::MatrixXd::Ones(n, 1);
  out.data.columns = design_columns(1);
  const Eigen::VectorXd eta =
      eta_from(out.truth.intercept, out.truth.coeff, out.data.X,
               out.data.cells);
  sample_response(FamilySpec{Family::bernoulli_logit, 1.0}, eta, 1.0,
                  rng_noise, out.data.y);
  return out;
}

Eigen::VectorXd truth_eta(const SyntheticTruth& truth, const Dataset& data) {
  if (static_cast<int>(truth.coeff.coef_dim()) != data.feature_count())
    fail(ErrorCode::dimension_error,
         "truth slope width does not match dataset features");
  return eta_from(truth.intercept, truth.coeff, data.X, data.cells);
}

std::pair<Dataset, Dataset> split_head(const Dataset& data,
                                       std::int64_t n_head) {
  if (n_head < 1 || n_head >= data.n())
    fail(ErrorCode::config_error, "split point must leave rows on both sides");
  Dataset head, tail;
  const std::int64_t n_tail = data.n() - n_head;
  head.X = data.X.topRows(n_head);
  head.y = data.y.head(n_head);
  head.cells.assign(data.cells.begin(), data.cells.begin() + n_head);
  head.columns = data.columns;
  tail.X = data.X.bottomRows(n_tail);
  tail.y = data.y.tail(n_tail);
  tail.cells.assign(data.cells.begin() + n_head, data.cells.end());
  tail.columns = data.columns;
  return {std::move(head), std::move(tail)};
}

RegComparisonResult run_regularization_comparison(
    const RegCompareConfig& cfg) {
  if (cfg.replications < 1)
    fail(ErrorCode::config_error, "need at least one replication");
  if (cfg.kmax < 0 || cfg.kmax > cfg.d)
    fail(ErrorCode::invalid_truncation, "order sweep exceeds lattice dims");
  RegComparisonResult out;
  out.config = cfg;
  out.schemes = {"unregularized", "fixed", "decay", "scaled"};
  const std::size_t n_schemes = out.schemes.size();
  const std::size_t n_orders = static_cast<std::size_t>(cfg.kmax + 1);
  out.improvement.assign(n_schemes, std::vector<MetricCell>(n_orders));
  for (auto& row : out.improvement)
    for (auto& cell : row)
      cell.per_rep.resize(static_cast<std::size_t>(cfg.replications));

  const FamilySpec gen_family{Family::gaussian, 1.0};
  for (int rep = 0; rep < cfg.replications; ++rep) {
    const std::uint64_t rep_seed =
        derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
    SyntheticData gen =
        gen_hierarchical(cfg.d, cfg.levels, cfg.n_train + cfg.n_test, cfg.rho,
                         cfg.sigma, cfg.p, gen_family, rep_seed);
    auto [train, test] = split_head(gen.data, cfg.n_train);
    const double sigma_hat = estimate_sigma(train, gen_family);
    FamilySpec family{Family::gaussian, sigma_hat * sigma_hat};

    for (int k = 0; k <= cfg.kmax; ++k) {
      FitConfig fit = cfg.fit;
      fit.truncation = k;
      fit.truncation_intercept = -1;
      fit.truncation_coeff = -1;
      fit.seed = derive_seed(rep_seed, 100 + static_cast<std::uint64_t>(k));
      auto [int_shape, coef_shape] =
          make_shapes(gen.truth.lattice, train.feature_count(), fit);
      std::vector<RegularizationPlan> plans;
      plans.push_back(build_free_plan(int_shape, coef_shape));
      plans.push_back(build_fixed_plan(int_shape, coef_shape, 1.0));
      plans.push_back(build_decay_plan(int_shape, coef_shape, 5.0, 0.9));
      plans.push_back(build_scaled_plan(int_shape, coef_shape, train.cells,
                                        gen.truth.lattice, sigma_hat));
      std::vector<double> test_ll(n_schemes);
      for (std::size_t s = 0; s < n_schemes; ++s) {
        FittedModel m = map_fit(train, gen.truth.lattice, family, plans[s],
                                fit, int_shape, coef_shape);
        test_ll[s] = -mean_nll(m, test);
      }
      for (std::size_t s = 0; s < n_schemes; ++s)
        out.improvement[s][static_cast<std::size_t>(k)]
            .per_rep[static_cast<std::size_t>(rep)] = test_ll[s] - test_ll[0];
    }
  }
  for (auto& row : out.improvement)
    for (auto& cell : row) cell.mean = mean_and_se(cell.per_rep, &cell.se);
  return out;
}

RgFlowResult run_rg_flow(const RgFlowConfig& cfg) {
  if (cfg.replications < 1)
    fail(ErrorCode::config_error, "need at least one replication");
  if (cfg.kmax < 1 || cfg.kmax > cfg.d)
    fail(ErrorCode::invalid_truncation,
         "order sweep needs 1 <= kmax <= lattice dims");
  RgFlowResult out;
  out.config = cfg;
  out.reps.resize(static_cast<std::size_t>(cfg.replications));
  const std::size_t n_orders = static_cast<std::size_t>(cfg.kmax + 1);

  const FamilySpec gen_family{Family::gaussian, 1.0};
  for (int rep = 0; rep < cfg.replications; ++rep) {
    const std::uint64_t rep_seed =
        derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
    SyntheticData gen =
        gen_hierarchical(cfg.d, cfg.levels, cfg.n_train + cfg.n_test, cfg.rho,
                         cfg.sigma, cfg.p, gen_family, rep_seed);
    auto [train, test] = split_head(gen.data, cfg.n_train);
    RgFlowRep& r = out.reps[static_cast<std::size_t>(rep)];
    r.sigma_hat = estimate_sigma(train, gen_family);
    FamilySpec family{Family::gaussian, r.sigma_hat * r.sigma_hat};
    r.waic.resize(n_orders);
    r.test_loss.resize(n_orders);

    std::vector<FittedModel> fits;
    fits.reserve(n_orders);
    for (int k = 0; k <= cfg.kmax; ++k) {
      FitConfig fit = cfg.fit;
      fit.truncation = k;
      fit.truncation_intercept = -1;
      fit.truncation_coeff = -1;
      fit.seed = derive_seed(rep_seed, 100 + static_cast<std::uint64_t>(k));
      auto [int_shape, coef_shape] =
          make_shapes(gen.truth.lattice, train.feature_count(), fit);
      RegularizationPlan plan = build_scaled_plan(
          int_shape, coef_shape, train.cells, gen.truth.lattice, r.sigma_hat);
      fits.push_back(map_fit(train, gen.truth.lattice, family, plan, fit,
                             int_shape, coef_shape));
      const std::uint64_t waic_seed =
          derive_seed(rep_seed, 200 + static_cast<std::uint64_t>(k));
      r.waic[static_cast<std::size_t>(k)] =
          waic(fits.back(), train, cfg.waic_draws, waic_seed).total;
      r.test_loss[static_cast<std::size_t>(k)] = mean_nll(fits.back(), test);
    }
    r.delta = generalization_gap(r.waic);
    r.scales = effect_scales(fits[0], fits[1]);
  }

  // Aggregate scores, then flow estimates from the pooled tensor scales.
  out.aggregate.orders.resize(n_orders);
  for (std::size_t k = 0; k < n_orders; ++k) {
    RgOrderRow& row = out.aggregate.orders[k];
    row.order = static_cast<int>(k);
    for (const RgFlowRep& r : out.reps) {
      row.waic_total += r.waic[k];
      row.test_loss += r.test_loss[k];
    }
    row.waic_total /= static_cast<double>(cfg.replications);
    row.test_loss /= static_cast<double>(cfg.replications);
  }
  for (std::size_t k = 1; k < n_orders; ++k)
    out.aggregate.orders[k].delta_s = out.aggregate.orders[k].waic_total -
                                      out.aggregate.orders[k - 1].waic_total;

  out.frac_delta_neg.assign(static_cast<std::size_t>(cfg.kmax), 0.0);
  out.frac_ordered = 0.0;
  for (const RgFlowRep& r : out.reps) {
    bool ordered = true;
    for (std::size_t k = 0; k + 1 < n_orders; ++k) {
      if (r.delta[k] < 0.0) out.frac_delta_neg[k] += 1.0;
      if (r.test_loss[k + 1] >= r.test_loss[k]) ordered = false;
    }
    if (ordered) out.frac_ordered += 1.0;
  }
  for (double& f : out.frac_delta_neg) f /= cfg.replications;
  out.frac_ordered /= cfg.replications;

  EffectScales pooled;
  double sigma2_mean = 0.0;
  for (const RgFlowRep& r : out.reps) {
    pooled.sum_sq_order0 += r.scales.sum_sq_order0;
    pooled.n_order0 += r.scales.n_order0;
    pooled.sum_sq_order1 += r.scales.sum_sq_order1;
    pooled.n_order1 += r.scales.n_order1;
    sigma2_mean += r.sigma_hat * r.sigma_hat;
  }
  sigma2_mean /= cfg.replications;
  if (pooled.n_order0 > 0 && pooled.n_order1 > 0 &&
      pooled.sum_sq_order0 > 0.0) {
    const double ms0 =
        pooled.sum_sq_order0 / static_cast<double>(pooled.n_order0);
    const double ms1 =
        pooled.sum_sq_order1 / static_cast<double>(pooled.n_order1);
    out.aggregate.rho_hat = ms1 / ms0;
  }
  if (out.aggregate.rho_hat > 0.0 && out.aggregate.rho_hat < cfg.levels) {
    out.aggregate.flow_defined = true;
    out.aggregate.kstar =
        critical_order(static_cast<double>(cfg.n_train), sigma2_mean,
                       cfg.levels, out.aggregate.rho_hat);
    out.aggregate.kstar_lo =
        std::max(0, static_cast<int>(std::floor(out.aggregate.kstar)));
    out.aggregate.kstar_hi =
        std::max(out.aggregate.kstar_lo,
                 static_cast<int>(std::ceil(out.aggregate.kstar)));
    const int k_round = std::clamp(
        static_cast<int>(std::llround(out.aggregate.kstar)), 0, cfg.d);
    out.aggregate.xi =
        correlation_length(cfg.d, k_round, cfg.levels, out.aggregate.rho_hat);
  }
  return out;
}

ReplicaCheck run_replica_check(int p, std::int64_t n, double lambda2,
                               double sigma2, int draws, std::uint64_t seed) {
  if (p < 1 || n < 1) fail(ErrorCode::config_error, "need p >= 1 and n >= 1");
  if (lambda2 <= 0.0 || sigma2 <= 0.0)
    fail(ErrorCode::config_error, "scale parameters must be positive");
  if (draws < 1) fail(ErrorCode::config_error, "need at least one draw");
  ReplicaCheck out;
  out.draws = draws;
  out.gamma = static_cast<double>(p) / static_cast<double>(n);
  out.gamma_warning = out.gamma >= 0.9;
  out.predicted =
      replica_df(p, static_cast<double>(n), lambda2, sigma2);

  const double tau = std::sqrt(lambda2);
  const Eigen::VectorXd w =
      Eigen::VectorXd::Constant(n, 1.0 / sigma2);
  std::vector<double> df(static_cast<std::size_t>(draws));
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < draws; ++s) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(s));
    Eigen::MatrixXd X(n, p);
    for (std::int64_t j = 0; j < n; ++j)
      for (int c = 0; c < p; ++c) X(j, c) = unit(rng);
    df[static_cast<std::size_t>(s)] = df_eff_ridge(X, w, tau);
  }
  out.mc_mean = mean_and_se(df, &out.mc_stderr);
  return out;
}

}  // namespace hlglm

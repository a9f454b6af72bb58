#include "hlglm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hlglm/errors.hpp"
#include "hlglm/rng.hpp"

namespace hlglm {

namespace {

// Streaming per-observation accumulators: online logsumexp for the
// predictive mean and Welford moments for the log-density variance.
struct ObsAccumulator {
  double max_log = -std::numeric_limits<double>::infinity();
  double scaled_sum = 0.0;  // sum of exp(log f - max_log)
  double mean = 0.0;
  double m2 = 0.0;
  std::int64_t count = 0;

  void push(double log_f) {
    if (log_f > max_log) {
      if (count > 0) scaled_sum *= std::exp(max_log - log_f);
      max_log = log_f;
    }
    scaled_sum += std::exp(log_f - max_log);
    ++count;
    double d = log_f - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (log_f - mean);
  }

  double log_mean() const {
    return max_log + std::log(scaled_sum / static_cast<double>(count));
  }
  double variance() const {
    return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
  }
};

// One posterior draw of every block offset: delta = L^-T z per combo. The
// layout mirrors the decomposition tensors so eta offsets accumulate the
// same way the fit does.
struct DrawBuffers {
  std::vector<Eigen::VectorXd> int_delta;   // [comp] -> per combo scalar
  std::vector<Eigen::MatrixXd> coef_delta;  // [comp] -> combos x f

  void shape_like(const FittedModel& m) {
    int_delta.resize(static_cast<std::size_t>(m.intercept.component_count()));
    for (int i = 0; i < m.intercept.component_count(); ++i)
      int_delta[static_cast<std::size_t>(i)].resize(m.intercept.combo_count(i));
    coef_delta.resize(static_cast<std::size_t>(m.coeff.component_count()));
    for (int i = 0; i < m.coeff.component_count(); ++i)
      coef_delta[static_cast<std::size_t>(i)].resize(m.coeff.combo_count(i),
                                                     m.coeff.coef_dim());
  }
};

void sample_offsets(const FittedModel& m, const LaplacePosterior& lp,
                    std::mt19937_64& rng, std::normal_distribution<double>& nd,
                    DrawBuffers& buf) {
  for (int i = 0; i < m.intercept.component_count(); ++i) {
    const auto& chol = lp.intercept_chol[static_cast<std::size_t>(i)];
    auto& delta = buf.int_delta[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < delta.size(); ++c)
      delta[c] = nd(rng) / chol[static_cast<std::size_t>(c)](0, 0);
  }
  const int f = m.coeff.coef_dim();
  if (f > 0) {
    Eigen::VectorXd z(f);
    for (int i = 0; i < m.coeff.component_count(); ++i) {
      const auto& chol = lp.coeff_chol[static_cast<std::size_t>(i)];
      auto& delta = buf.coef_delta[static_cast<std::size_t>(i)];
      for (Eigen::Index c = 0; c < delta.rows(); ++c) {
        for (int k = 0; k < f; ++k) z[k] = nd(rng);
        delta.row(c) = chol[static_cast<std::size_t>(c)]
                           .triangularView<Eigen::Lower>()
                           .transpose()
                           .solve(z)
                           .transpose();
      }
    }
  }
}

}  // namespace

WaicReport waic(const FittedModel& m, const Dataset& data, int draws,
                std::uint64_t seed) {
  if (draws < 100)
    fail(ErrorCode::config_error, "waic: need at least 100 posterior draws");
  if (data.n() == 0) fail(ErrorCode::empty_data, "waic: no observations");

  LaplacePosterior lp = laplace_posterior(m, data);
  CellBinding bind_int = bind_cells(m.intercept, data.cells);
  CellBinding bind_coef = bind_cells(m.coeff, data.cells);
  Eigen::VectorXd eta_map = predict_eta(m, data.X, data.cells);

  const auto n = data.n();
  const int f = m.coeff.coef_dim();
  std::vector<ObsAccumulator> acc(static_cast<std::size_t>(n));

  DrawBuffers buf;
  buf.shape_like(m);
  std::mt19937_64 rng = make_rng(seed, 0);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd eta(n);

  for (int s = 0; s < draws; ++s) {
    sample_offsets(m, lp, rng, nd, buf);
    eta = eta_map;
    for (int i = 0; i < m.intercept.component_count(); ++i) {
      const auto& delta = buf.int_delta[static_cast<std::size_t>(i)];
      const auto& b = bind_int[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < n; ++j)
        eta[j] += delta[b[static_cast<std::size_t>(j)]];
    }
    if (f > 0) {
      for (int i = 0; i < m.coeff.component_count(); ++i) {
        const auto& delta = buf.coef_delta[static_cast<std::size_t>(i)];
        const auto& b = bind_coef[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < n; ++j)
          eta[j] += delta.row(b[static_cast<std::size_t>(j)])
                        .dot(data.X.row(j).segment(1, f));
      }
    }
    for (Eigen::Index j = 0; j < n; ++j)
      acc[static_cast<std::size_t>(j)].push(
          -family_nll(m.family, data.y[j], eta[j]));
  }

  WaicReport report;
  report.draws = draws;
  report.per_obs_lppd.resize(n);
  report.per_obs_var.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    report.per_obs_lppd[j] = acc[static_cast<std::size_t>(j)].log_mean();
    report.per_obs_var[j] = acc[static_cast<std::size_t>(j)].variance();
  }
  report.lppd_term = -report.per_obs_lppd.sum();
  report.penalty_term = report.per_obs_var.sum();
  report.total = report.lppd_term + report.penalty_term;
  if (!std::isfinite(report.total))
    fail(ErrorCode::numerical_error, "waic: non-finite score");
  return report;
}

std::vector<double> generalization_gap(std::span<const double> s_by_order) {
  std::vector<double> gaps;
  if (s_by_order.size() < 2) return gaps;
  gaps.reserve(s_by_order.size() - 1);
  for (std::size_t k = 1; k < s_by_order.size(); ++k)
    gaps.push_back(s_by_order[k] - s_by_order[k - 1]);
  return gaps;
}

double critical_order(double n, double sigma2, double levels, double rho) {
  if (!(n > 0.0) || !(sigma2 > 0.0) || !(levels > 1.0))
    fail(ErrorCode::config_error, "critical_order: need N, sigma^2 > 0, L > 1");
  if (!(rho > 0.0))
    fail(ErrorCode::config_error, "critical_order: decay rate must be positive");
  if (rho >= levels)
    fail(ErrorCode::ill_defined_flow,
         "critical_order: decay rate >= levels, no crossing point");
  return std::log(n / sigma2) / std::log(levels / rho);
}

double snr_at_order(double n, double rho, double sigma2, double levels,
                    double k) {
  if (!(n > 0.0) || !(sigma2 > 0.0) || !(levels > 0.0) || !(rho >= 0.0))
    fail(ErrorCode::config_error, "snr_at_order: invalid inputs");
  return n * std::pow(rho, k) / (sigma2 * std::pow(levels, k));
}

namespace {

void add_order_squares(const DecomposedParameter& dp, int order, double& sum_sq,
                       std::int64_t& count) {
  if (dp.coef_dim() == 0) return;
  for (int i = 0; i < dp.component_count(); ++i) {
    if (dp.component(i).order() != order) continue;
    const Eigen::MatrixXd& t = dp.tensor(i);
    sum_sq += t.squaredNorm();
    count += t.size();
  }
}

}  // namespace

EffectScales effect_scales(const FittedModel& order0_fit,
                           const FittedModel& order1_fit) {
  EffectScales s;
  add_order_squares(order0_fit.intercept, 0, s.sum_sq_order0, s.n_order0);
  add_order_squares(order0_fit.coeff, 0, s.sum_sq_order0, s.n_order0);
  add_order_squares(order1_fit.intercept, 1, s.sum_sq_order1, s.n_order1);
  add_order_squares(order1_fit.coeff, 1, s.sum_sq_order1, s.n_order1);
  return s;
}

double estimate_rho(std::span<const FittedModel> fits) {
  if (fits.empty())
    fail(ErrorCode::config_error, "estimate_rho: no fits supplied");
  const FittedModel* order1 = nullptr;
  for (const auto& f : fits) {
    if (std::max(f.intercept.truncation(), f.coeff.truncation()) >= 1) {
      order1 = &f;
      break;
    }
  }
  if (order1 == nullptr)
    fail(ErrorCode::config_error,
         "estimate_rho: need a fit of truncation >= 1");
  EffectScales s = effect_scales(fits[0], *order1);
  if (s.n_order0 == 0 || s.n_order1 == 0)
    fail(ErrorCode::config_error, "estimate_rho: missing tensor entries");
  double ms0 = s.sum_sq_order0 / static_cast<double>(s.n_order0);
  double ms1 = s.sum_sq_order1 / static_cast<double>(s.n_order1);
  if (!(ms0 > 0.0))
    fail(ErrorCode::undefined_rho,
         "estimate_rho: order-0 effect scale is zero");
  return ms1 / ms0;
}

double correlation_length(int d, int kstar, double levels, double rho) {
  if (d < 0 || kstar < 0 || kstar > d)
    fail(ErrorCode::config_error, "correlation_length: order out of range");
  if (!(rho > 0.0) || !(levels > 0.0))
    fail(ErrorCode::config_error, "correlation_length: invalid scales");
  if (rho >= levels)
    fail(ErrorCode::ill_defined_flow,
         "correlation_length: decay rate >= levels");
  double binom = 1.0;
  for (int i = 1; i <= kstar; ++i)
    binom = binom * static_cast<double>(d - kstar + i) / static_cast<double>(i);
  return 2.0 /
         (binom * std::pow(levels, kstar) * std::log(levels / rho));
}

double replica_df(int p, double n, double lambda2, double sigma2) {
  if (p < 0 || !(n > 0.0) || !(lambda2 > 0.0) || !(sigma2 > 0.0))
    fail(ErrorCode::config_error, "replica_df: invalid inputs");
  return static_cast<double>(p) * n * lambda2 / (n * lambda2 + sigma2);
}

}  // namespace hlglm

#include "hlglm/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "hlglm/errors.hpp"

namespace hlglm {

double lr_at(const LrSchedule& s, int step, int max_steps) {
  if (max_steps <= 1) return s.peak;
  int warmup = std::max(1, static_cast<int>(std::floor(
                               s.warmup_fraction * static_cast<double>(max_steps))));
  if (step < warmup) {
    double t = static_cast<double>(step) / static_cast<double>(warmup);
    return s.start + (s.peak - s.start) * t;
  }
  double t = static_cast<double>(step - warmup) /
             static_cast<double>(std::max(1, max_steps - warmup));
  return s.end + 0.5 * (s.peak - s.end) * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

inline Eigen::RowVectorXd feature_row(const Eigen::MatrixXd& X, Eigen::Index j,
                                      int f) {
  return X.row(j).segment(1, f);
}

double penalty_only(const RegularizationPlan& plan,
                    const DecomposedParameter& intercept,
                    const DecomposedParameter& coeff) {
  double pen = 0.0;
  auto add_part = [&pen](const PartPlan& part, const DecomposedParameter& dp) {
    for (int i = 0; i < dp.component_count(); ++i) {
      const auto& tau = part.comps[static_cast<std::size_t>(i)].tau;
      const Eigen::MatrixXd& t = dp.tensor(i);
      for (Eigen::Index r = 0; r < t.rows(); ++r) {
        double ta = tau[r];
        if (std::isinf(ta)) continue;
        pen += t.row(r).squaredNorm() / (2.0 * ta * ta);
      }
    }
  };
  add_part(plan.intercept, intercept);
  add_part(plan.coeff, coeff);
  return pen;
}

void accumulate_eta(const DecomposedParameter& intercept,
                    const DecomposedParameter& coeff,
                    const CellBinding& bind_int, const CellBinding& bind_coef,
                    const Eigen::MatrixXd& X, Eigen::VectorXd& eta) {
  const auto n = X.rows();
  const int f = coeff.coef_dim();
  eta.setZero();
  for (int i = 0; i < intercept.component_count(); ++i) {
    const Eigen::MatrixXd& t = intercept.tensor(i);
    const auto& b = bind_int[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j)
      eta[j] += t(b[static_cast<std::size_t>(j)], 0);
  }
  if (f > 0) {
    for (int i = 0; i < coeff.component_count(); ++i) {
      const Eigen::MatrixXd& t = coeff.tensor(i);
      const auto& b = bind_coef[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < n; ++j)
        eta[j] +=
            t.row(b[static_cast<std::size_t>(j)]).dot(feature_row(X, j, f));
    }
  }
}

struct GradBuffers {
  std::vector<Eigen::MatrixXd> g_int, g_coef;
  Eigen::VectorXd eta;
  Eigen::VectorXd resid;

  void shape_like(const DecomposedParameter& intercept,
                  const DecomposedParameter& coeff, Eigen::Index n) {
    auto shape = [](std::vector<Eigen::MatrixXd>& g,
                    const DecomposedParameter& dp) {
      g.resize(static_cast<std::size_t>(dp.component_count()));
      for (int i = 0; i < dp.component_count(); ++i)
        g[static_cast<std::size_t>(i)].setZero(dp.combo_count(i), dp.coef_dim());
    };
    shape(g_int, intercept);
    shape(g_coef, coeff);
    eta.resize(n);
    resid.resize(n);
  }

  void zero() {
    for (auto& g : g_int) g.setZero();
    for (auto& g : g_coef) g.setZero();
  }
};

double loss_and_grad_into(const Dataset& data, const FamilySpec& family,
                          const RegularizationPlan& plan,
                          const DecomposedParameter& intercept,
                          const DecomposedParameter& coeff,
                          const CellBinding& bind_int,
                          const CellBinding& bind_coef, GradBuffers& buf) {
  const auto n = data.X.rows();
  const int f = coeff.coef_dim();
  buf.zero();
  accumulate_eta(intercept, coeff, bind_int, bind_coef, data.X, buf.eta);

  double nll = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    nll += family_nll(family, data.y[j], buf.eta[j]);
    buf.resid[j] = family_dnll_deta(family, data.y[j], buf.eta[j]);
  }

  for (int i = 0; i < intercept.component_count(); ++i) {
    Eigen::MatrixXd& g = buf.g_int[static_cast<std::size_t>(i)];
    const auto& b = bind_int[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j)
      g(b[static_cast<std::size_t>(j)], 0) += buf.resid[j];
  }
  if (f > 0) {
    for (int i = 0; i < coeff.component_count(); ++i) {
      Eigen::MatrixXd& g = buf.g_coef[static_cast<std::size_t>(i)];
      const auto& b = bind_coef[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < n; ++j)
        g.row(b[static_cast<std::size_t>(j)]) +=
            buf.resid[j] * feature_row(data.X, j, f);
    }
  }

  double pen = 0.0;
  auto add_pen = [&pen](const PartPlan& part, const DecomposedParameter& dp,
                        std::vector<Eigen::MatrixXd>& g) {
    for (int i = 0; i < dp.component_count(); ++i) {
      const auto& tau = part.comps[static_cast<std::size_t>(i)].tau;
      const Eigen::MatrixXd& t = dp.tensor(i);
      Eigen::MatrixXd& gi = g[static_cast<std::size_t>(i)];
      for (Eigen::Index r = 0; r < t.rows(); ++r) {
        double ta = tau[r];
        if (std::isinf(ta)) continue;
        double inv2 = 1.0 / (ta * ta);
        pen += 0.5 * inv2 * t.row(r).squaredNorm();
        gi.row(r) += inv2 * t.row(r);
      }
    }
  };
  add_pen(plan.intercept, intercept, buf.g_int);
  add_pen(plan.coeff, coeff, buf.g_coef);
  return nll + pen;
}

void check_fit_inputs(const Dataset& data, const LatticeSpec& lattice,
                      const FamilySpec& family,
                      const DecomposedParameter& intercept,
                      const DecomposedParameter& coeff) {
  if (data.n() == 0) fail(ErrorCode::empty_data, "fit: no observations");
  if (static_cast<std::int64_t>(data.cells.size()) != data.n())
    fail(ErrorCode::dimension_error, "fit: cells not bound to rows");
  if (intercept.coef_dim() != 1)
    fail(ErrorCode::dimension_error, "fit: intercept part must have coef_dim 1");
  if (coeff.coef_dim() != data.feature_count())
    fail(ErrorCode::dimension_error,
         "fit: coefficient part width != feature count");
  if (intercept.levels() != lattice.level_counts() ||
      coeff.levels() != lattice.level_counts())
    fail(ErrorCode::model_lattice_mismatch,
         "fit: decomposition levels do not match the lattice");
  for (Eigen::Index j = 0; j < data.n(); ++j)
    check_response(family, data.y[j]);
}

// Per-(component, combo) weighted curvature: intercept blocks reduce to the
// sum of weights, coefficient blocks are f x f weighted feature outers.
struct CurvatureBlocks {
  std::vector<Eigen::VectorXd> intercept;           // [comp] -> per combo
  std::vector<std::vector<Eigen::MatrixXd>> coeff;  // [comp][combo], f x f
};

CurvatureBlocks curvature_blocks(const Dataset& data,
                                 const DecomposedParameter& intercept,
                                 const DecomposedParameter& coeff,
                                 const CellBinding& bind_int,
                                 const CellBinding& bind_coef,
                                 const Eigen::VectorXd& w) {
  CurvatureBlocks blocks;
  const auto n = data.X.rows();
  const int f = coeff.coef_dim();
  blocks.intercept.resize(static_cast<std::size_t>(intercept.component_count()));
  for (int i = 0; i < intercept.component_count(); ++i) {
    auto& acc = blocks.intercept[static_cast<std::size_t>(i)];
    acc.setZero(intercept.combo_count(i));
    const auto& b = bind_int[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j)
      acc[b[static_cast<std::size_t>(j)]] += w[j];
  }
  blocks.coeff.resize(static_cast<std::size_t>(coeff.component_count()));
  if (f > 0) {
    for (int i = 0; i < coeff.component_count(); ++i) {
      auto& per = blocks.coeff[static_cast<std::size_t>(i)];
      per.assign(static_cast<std::size_t>(coeff.combo_count(i)),
                 Eigen::MatrixXd::Zero(f, f));
      const auto& b = bind_coef[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::RowVectorXd x = feature_row(data.X, j, f);
        per[static_cast<std::size_t>(b[static_cast<std::size_t>(j)])]
            .noalias() += w[j] * (x.transpose() * x);
      }
    }
  }
  return blocks;
}

Eigen::VectorXd fisher_weights_at(const FamilySpec& family,
                                  const Eigen::VectorXd& eta) {
  Eigen::VectorXd w(eta.size());
  for (Eigen::Index j = 0; j < eta.size(); ++j)
    w[j] = fisher_weight(family, family_mean(family, eta[j]));
  return w;
}

// Mean Fisher weight per level combination of one decomposition part.
std::vector<Eigen::VectorXd> combo_mean_weights(const DecomposedParameter& dp,
                                                const CellBinding& bind,
                                                const Eigen::VectorXd& w) {
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(dp.component_count()));
  for (int i = 0; i < dp.component_count(); ++i) {
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(dp.combo_count(i));
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(dp.combo_count(i));
    const auto& b = bind[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      sums[b[static_cast<std::size_t>(j)]] += w[j];
      counts[b[static_cast<std::size_t>(j)]] += 1.0;
    }
    Eigen::VectorXd mean(dp.combo_count(i));
    for (Eigen::Index c = 0; c < mean.size(); ++c)
      mean[c] = counts[c] > 0.0 ? sums[c] / counts[c] : 0.0;
    out[static_cast<std::size_t>(i)] = std::move(mean);
  }
  return out;
}

}  // namespace

double penalized_loss_grad(const Dataset& data, const FamilySpec& family,
                           const RegularizationPlan& plan,
                           const DecomposedParameter& intercept,
                           const DecomposedParameter& coeff,
                           const CellBinding& bind_int,
                           const CellBinding& bind_coef,
                           std::vector<Eigen::MatrixXd>* grad_int,
                           std::vector<Eigen::MatrixXd>* grad_coef) {
  GradBuffers buf;
  buf.shape_like(intercept, coeff, data.X.rows());
  double loss = loss_and_grad_into(data, family, plan, intercept, coeff,
                                   bind_int, bind_coef, buf);
  if (grad_int != nullptr) *grad_int = buf.g_int;
  if (grad_coef != nullptr) *grad_coef = buf.g_coef;
  return loss;
}

std::pair<DecomposedParameter, DecomposedParameter> make_shapes(
    const LatticeSpec& lattice, int feature_count, const FitConfig& cfg) {
  auto levels = lattice.level_counts();
  DecomposedParameter intercept(levels, 1, cfg.k_intercept());
  DecomposedParameter coeff(levels, feature_count, cfg.k_coeff());
  return {std::move(intercept), std::move(coeff)};
}

FittedModel map_fit(const Dataset& data, const LatticeSpec& lattice,
                    const FamilySpec& family, const RegularizationPlan& plan,
                    const FitConfig& cfg, DecomposedParameter intercept_init,
                    DecomposedParameter coeff_init) {
  check_fit_inputs(data, lattice, family, intercept_init, coeff_init);
  check_plan_shape(plan, intercept_init, coeff_init);

  FittedModel m;
  m.lattice = lattice;
  m.intercept = std::move(intercept_init);
  m.coeff = std::move(coeff_init);
  m.family = family;
  m.plan = plan;

  CellBinding bind_int = bind_cells(m.intercept, data.cells);
  CellBinding bind_coef = bind_cells(m.coeff, data.cells);

  GradBuffers buf;
  buf.shape_like(m.intercept, m.coeff, data.X.rows());

  auto zeros_like = [](const DecomposedParameter& dp) {
    std::vector<Eigen::MatrixXd> v(static_cast<std::size_t>(dp.component_count()));
    for (int i = 0; i < dp.component_count(); ++i)
      v[static_cast<std::size_t>(i)] =
          Eigen::MatrixXd::Zero(dp.combo_count(i), dp.coef_dim());
    return v;
  };
  auto m1_int = zeros_like(m.intercept), m2_int = zeros_like(m.intercept);
  auto m1_coef = zeros_like(m.coeff), m2_coef = zeros_like(m.coeff);

  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2, eps = cfg.adam_eps;
  double prev_loss = std::numeric_limits<double>::quiet_NaN();
  int calm = 0;
  int steps_done = 0;
  bool converged = false;
  double b1t = 1.0, b2t = 1.0;

  for (int step = 0; step < cfg.max_steps; ++step) {
    double loss = loss_and_grad_into(data, family, plan, m.intercept, m.coeff,
                                     bind_int, bind_coef, buf);
    if (!std::isfinite(loss))
      fail(ErrorCode::diverged, "fit diverged at step " + std::to_string(step));

    steps_done = step + 1;
    if (std::isfinite(prev_loss)) {
      double rel = std::abs(loss - prev_loss) / (std::abs(prev_loss) + 1.0);
      calm = rel < cfg.tol ? calm + 1 : 0;
      if (calm >= cfg.patience) {
        converged = true;
        break;
      }
    }
    prev_loss = loss;

    const double lr = lr_at(cfg.lr, step, cfg.max_steps);
    b1t *= b1;
    b2t *= b2;
    const double corr = std::sqrt(1.0 - b2t) / (1.0 - b1t);
    auto adam_update = [&](DecomposedParameter& dp,
                           std::vector<Eigen::MatrixXd>& g,
                           std::vector<Eigen::MatrixXd>& m1,
                           std::vector<Eigen::MatrixXd>& m2) {
      for (int i = 0; i < dp.component_count(); ++i) {
        auto& gi = g[static_cast<std::size_t>(i)];
        auto& m1i = m1[static_cast<std::size_t>(i)];
        auto& m2i = m2[static_cast<std::size_t>(i)];
        m1i = b1 * m1i + (1.0 - b1) * gi;
        m2i = b2 * m2i + (1.0 - b2) * gi.cwiseProduct(gi);
        dp.tensor(i).array() -=
            lr * corr * m1i.array() / (m2i.array().sqrt() + eps);
      }
    };
    adam_update(m.intercept, buf.g_int, m1_int, m2_int);
    adam_update(m.coeff, buf.g_coef, m1_coef, m2_coef);
  }

  double final_loss = loss_and_grad_into(data, family, plan, m.intercept,
                                         m.coeff, bind_int, bind_coef, buf);
  if (!std::isfinite(final_loss))
    fail(ErrorCode::diverged, "fit diverged at final evaluation");
  double pen = penalty_only(plan, m.intercept, m.coeff);
  m.diag.final_loss = final_loss;
  m.diag.penalty = pen;
  m.diag.train_nll = final_loss - pen;
  m.diag.steps = steps_done;
  m.diag.converged = converged;

  Eigen::VectorXd w = fisher_weights_at(family, buf.eta);
  CurvatureBlocks blocks =
      curvature_blocks(data, m.intercept, m.coeff, bind_int, bind_coef, w);

  m.fisher.global_wbar = w.mean();
  m.fisher.intercept_wbar = combo_mean_weights(m.intercept, bind_int, w);
  m.fisher.coeff_wbar = combo_mean_weights(m.coeff, bind_coef, w);

  m.diag.df_total = 0.0;
  m.diag.df_intercept.assign(
      static_cast<std::size_t>(m.intercept.component_count()), 0.0);
  for (int i = 0; i < m.intercept.component_count(); ++i) {
    const auto& tau = plan.intercept.comps[static_cast<std::size_t>(i)].tau;
    const auto& acc = blocks.intercept[static_cast<std::size_t>(i)];
    double df = 0.0;
    for (Eigen::Index c = 0; c < acc.size(); ++c) {
      double prior = std::isinf(tau[c]) ? 0.0 : 1.0 / (tau[c] * tau[c]);
      double denom = acc[c] + prior;
      if (denom > 0.0) df += acc[c] / denom;
    }
    m.diag.df_intercept[static_cast<std::size_t>(i)] = df;
    m.diag.df_total += df;
  }
  m.diag.df_coeff.assign(static_cast<std::size_t>(m.coeff.component_count()),
                         0.0);
  if (m.coeff.coef_dim() > 0) {
    for (int i = 0; i < m.coeff.component_count(); ++i) {
      const auto& tau = plan.coeff.comps[static_cast<std::size_t>(i)].tau;
      const auto& per = blocks.coeff[static_cast<std::size_t>(i)];
      double df = 0.0;
      for (std::size_t c = 0; c < per.size(); ++c) {
        double ta = tau[static_cast<Eigen::Index>(c)];
        double prior = std::isinf(ta) ? 0.0 : 1.0 / (ta * ta);
        Eigen::MatrixXd prec = per[c];
        prec.diagonal().array() += prior;
        Eigen::LDLT<Eigen::MatrixXd> solver(prec);
        if (solver.info() != Eigen::Success) continue;
        double tr = solver.solve(per[c]).trace();
        if (std::isfinite(tr)) df += tr;
      }
      m.diag.df_coeff[static_cast<std::size_t>(i)] = df;
      m.diag.df_total += df;
    }
  }
  return m;
}

Eigen::VectorXd predict_eta(const FittedModel& m, const Eigen::MatrixXd& X,
                            std::span<const CellIndex> cells) {
  if (static_cast<std::int64_t>(cells.size()) != X.rows())
    fail(ErrorCode::dimension_error, "predict: cells/rows mismatch");
  if (X.cols() != m.coeff.coef_dim() + 1)
    fail(ErrorCode::dimension_error,
         "predict: expected " + std::to_string(m.coeff.coef_dim() + 1) +
             " design columns, got " + std::to_string(X.cols()));
  CellBinding bind_int = bind_cells(m.intercept, cells);
  CellBinding bind_coef = bind_cells(m.coeff, cells);
  Eigen::VectorXd eta(X.rows());
  accumulate_eta(m.intercept, m.coeff, bind_int, bind_coef, X, eta);
  return eta;
}

Predictions predict(const FittedModel& m, const Dataset& data) {
  Predictions out;
  out.eta = predict_eta(m, data.X, data.cells);
  out.mu.resize(out.eta.size());
  for (Eigen::Index j = 0; j < out.eta.size(); ++j)
    out.mu[j] = family_mean(m.family, out.eta[j]);
  return out;
}

double mean_nll(const FittedModel& m, const Dataset& data) {
  Eigen::VectorXd eta = predict_eta(m, data.X, data.cells);
  double total = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j)
    total += family_nll(m.family, data.y[j], eta[j]);
  return total / static_cast<double>(std::max<Eigen::Index>(1, eta.size()));
}

LaplacePosterior laplace_posterior(const FittedModel& m, const Dataset& data) {
  check_fit_inputs(data, m.lattice, m.family, m.intercept, m.coeff);
  CellBinding bind_int = bind_cells(m.intercept, data.cells);
  CellBinding bind_coef = bind_cells(m.coeff, data.cells);
  Eigen::VectorXd eta = predict_eta(m, data.X, data.cells);
  Eigen::VectorXd w = fisher_weights_at(m.family, eta);
  CurvatureBlocks blocks =
      curvature_blocks(data, m.intercept, m.coeff, bind_int, bind_coef, w);

  LaplacePosterior lp;
  lp.intercept_chol.resize(
      static_cast<std::size_t>(m.intercept.component_count()));
  for (int i = 0; i < m.intercept.component_count(); ++i) {
    const auto& tau = m.plan.intercept.comps[static_cast<std::size_t>(i)].tau;
    const auto& acc = blocks.intercept[static_cast<std::size_t>(i)];
    auto& out = lp.intercept_chol[static_cast<std::size_t>(i)];
    out.resize(static_cast<std::size_t>(acc.size()));
    for (Eigen::Index c = 0; c < acc.size(); ++c) {
      double prior = std::isinf(tau[c]) ? 0.0 : 1.0 / (tau[c] * tau[c]);
      double prec = acc[c] + prior;
      if (!(prec > 0.0))
        fail(ErrorCode::numerical_error,
             "posterior curvature not positive definite (intercept component " +
                 std::to_string(i) + ", combo " + std::to_string(c) + ")");
      out[static_cast<std::size_t>(c)] =
          Eigen::MatrixXd::Constant(1, 1, std::sqrt(prec));
    }
  }
  lp.coeff_chol.resize(static_cast<std::size_t>(m.coeff.component_count()));
  const int f = m.coeff.coef_dim();
  for (int i = 0; i < m.coeff.component_count(); ++i) {
    const auto& tau = m.plan.coeff.comps[static_cast<std::size_t>(i)].tau;
    const auto& per = blocks.coeff[static_cast<std::size_t>(i)];
    auto& out = lp.coeff_chol[static_cast<std::size_t>(i)];
    out.resize(per.size());
    for (std::size_t c = 0; c < per.size() && f > 0; ++c) {
      double ta = tau[static_cast<Eigen::Index>(c)];
      double prior = std::isinf(ta) ? 0.0 : 1.0 / (ta * ta);
      Eigen::MatrixXd prec = per[c];
      prec.diagonal().array() += prior;
      Eigen::LLT<Eigen::MatrixXd> llt(prec);
      if (llt.info() != Eigen::Success)
        fail(ErrorCode::numerical_error,
             "posterior curvature not positive definite (coeff component " +
                 std::to_string(i) + ", combo " + std::to_string(c) + ")");
      out[c] = llt.matrixL();
    }
  }
  return lp;
}

Eigen::MatrixXd laplace_block_cov(const LaplacePosterior& lp, bool intercept,
                                  int comp, std::int64_t combo) {
  const auto& chol = intercept
                         ? lp.intercept_chol.at(static_cast<std::size_t>(comp))
                               .at(static_cast<std::size_t>(combo))
                         : lp.coeff_chol.at(static_cast<std::size_t>(comp))
                               .at(static_cast<std::size_t>(combo));
  Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(chol.rows(), chol.cols());
  Eigen::MatrixXd inv_l = chol.triangularView<Eigen::Lower>().solve(identity);
  return inv_l.transpose() * inv_l;
}

double estimate_sigma(const Dataset& data, const FamilySpec& family) {
  if (data.n() == 0) fail(ErrorCode::empty_data, "estimate_sigma: no data");
  switch (family.family) {
    case Family::gaussian: {
      // order-0 ridge over the full design, ones column included
      const auto p = data.X.cols();
      Eigen::MatrixXd a = data.X.transpose() * data.X;
      a.diagonal().array() += 1e-8 * static_cast<double>(data.n());
      Eigen::VectorXd beta = a.ldlt().solve(data.X.transpose() * data.y);
      Eigen::VectorXd r = data.y - data.X * beta;
      double dof = std::max<double>(1.0, static_cast<double>(data.n() - p));
      double sigma = std::sqrt(r.squaredNorm() / dof);
      return sigma > 0.0 ? sigma : 1e-8;
    }
    case Family::bernoulli_logit: {
      double ybar = data.y.mean();
      double wbar = std::max(ybar * (1.0 - ybar), 1e-6);
      return 1.0 / std::sqrt(wbar);
    }
    case Family::poisson_log: {
      double wbar = std::max(data.y.mean(), 1e-6);
      return 1.0 / std::sqrt(wbar);
    }
  }
  fail(ErrorCode::config_error, "unknown family");
}

FittedModel fit_adaptive(const Dataset& data, const LatticeSpec& lattice,
                         const FamilySpec& family, const FitConfig& cfg,
                         const AdaptiveOptions& opt) {
  auto [int0, coef0] = make_shapes(lattice, data.feature_count(), cfg);

  if (family.family == Family::gaussian) {
    double sigma = estimate_sigma(data, family);
    FamilySpec fam = family;
    fam.dispersion = sigma * sigma;
    RegularizationPlan plan =
        build_scaled_plan(int0, coef0, data.cells, lattice, sigma, opt.plan);
    FittedModel m = map_fit(data, lattice, fam, plan, cfg, std::move(int0),
                            std::move(coef0));
    m.fisher.iterations = 0;
    m.fisher.converged = true;
    return m;
  }

  // adaptive Fisher weights: flat start, then the mean curvature under the
  // current fit until the weights settle
  double w0 = family.family == Family::bernoulli_logit
                  ? 0.25
                  : std::max(data.y.mean(), 1e-6);
  auto flat_wbar = [&](const DecomposedParameter& dp) {
    std::vector<Eigen::VectorXd> w(static_cast<std::size_t>(dp.component_count()));
    for (int i = 0; i < dp.component_count(); ++i)
      w[static_cast<std::size_t>(i)] =
          Eigen::VectorXd::Constant(dp.combo_count(i), w0);
    return w;
  };
  std::vector<Eigen::VectorXd> wbar_int = flat_wbar(int0);
  std::vector<Eigen::VectorXd> wbar_coef = flat_wbar(coef0);
  double wbar_global = w0;

  FittedModel m;
  DecomposedParameter int_cur = int0, coef_cur = coef0;
  bool settled = false;
  int outer = 0;
  double delta = 0.0;
  for (outer = 1; outer <= opt.max_outer; ++outer) {
    RegularizationPlan plan =
        build_glm_plan(int0, coef0, data.cells, lattice, wbar_int, wbar_coef,
                       wbar_global, opt.plan);
    m = map_fit(data, lattice, family, plan, cfg, int_cur, coef_cur);
    int_cur = m.intercept;
    coef_cur = m.coeff;

    delta = std::abs(m.fisher.global_wbar - wbar_global);
    for (std::size_t i = 0; i < wbar_int.size(); ++i)
      delta = std::max(delta, (m.fisher.intercept_wbar[i] - wbar_int[i])
                                  .cwiseAbs()
                                  .maxCoeff());
    for (std::size_t i = 0; i < wbar_coef.size(); ++i)
      if (wbar_coef[i].size() > 0)
        delta = std::max(delta, (m.fisher.coeff_wbar[i] - wbar_coef[i])
                                    .cwiseAbs()
                                    .maxCoeff());

    wbar_global = m.fisher.global_wbar;
    wbar_int = m.fisher.intercept_wbar;
    wbar_coef = m.fisher.coeff_wbar;
    if (delta < opt.tol) {
      settled = true;
      break;
    }
  }

  m.fisher.iterations = std::min(outer, opt.max_outer);
  m.fisher.last_delta = delta;
  m.fisher.converged = settled;
  // report the plan consistent with the settled weights
  m.plan = build_glm_plan(int0, coef0, data.cells, lattice, wbar_int,
                          wbar_coef, wbar_global, opt.plan);
  if (!settled && opt.error_on_nonconvergence)
    fail(ErrorCode::non_convergence,
         "fisher reweighting did not settle in " +
             std::to_string(opt.max_outer) + " iterations (last delta " +
             std::to_string(delta) + ")");
  return m;
}

}  // namespace hlglm

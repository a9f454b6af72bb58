#include "hlglm/stacking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "hlglm/errors.hpp"

namespace hlglm {

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  Eigen::VectorXd w = (v.array() - v.maxCoeff()).exp();
  return w / w.sum();
}

// 1/(1 - h_n) weights from full-cell occupancy counts.
Eigen::VectorXd loo_coefficients(const LatticeSpec& lattice,
                                 std::span<const CellIndex> cells,
                                 int model_count, double cap) {
  std::unordered_map<std::int64_t, std::int64_t> counts;
  for (const auto& c : cells) ++counts[lattice.flat_index(c)];
  Eigen::VectorXd coef(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t j = 0; j < cells.size(); ++j) {
    double h = leverage(model_count, counts[lattice.flat_index(cells[j])], cap);
    coef[static_cast<Eigen::Index>(j)] = 1.0 / (1.0 - h);
  }
  return coef;
}

struct StackingProblem {
  const Eigen::MatrixXd& logits;
  const Eigen::VectorXd& y;
  const FamilySpec& family;
  CellBinding bind;
  Eigen::VectorXd coef;  // 1/(1-h) per row
  double ridge;

  // loss and gradient at the current weight tensors
  double eval(const DecomposedParameter& v, std::vector<Eigen::MatrixXd>& grad,
              Eigen::VectorXd& vrow, Eigen::VectorXd& w) const {
    const auto n = logits.rows();
    const int m = static_cast<int>(logits.cols());
    for (auto& g : grad) g.setZero();
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      vrow.setZero();
      for (int i = 0; i < v.component_count(); ++i)
        vrow += v.tensor(i)
                    .row(bind[static_cast<std::size_t>(i)]
                             [static_cast<std::size_t>(j)])
                    .transpose();
      w = softmax(vrow);
      double eta = w.dot(logits.row(j));
      loss += inv_n * coef[j] * family_nll(family, y[j], eta);
      double dl_deta = inv_n * coef[j] * family_dnll_deta(family, y[j], eta);
      // d eta / d v_k = w_k (logit_k - eta)
      for (int k = 0; k < m; ++k) vrow[k] = dl_deta * w[k] * (logits(j, k) - eta);
      for (int i = 0; i < v.component_count(); ++i)
        grad[static_cast<std::size_t>(i)]
            .row(bind[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) +=
            vrow.transpose();
    }
    for (int i = 0; i < v.component_count(); ++i) {
      loss += ridge * v.tensor(i).squaredNorm();
      grad[static_cast<std::size_t>(i)] += 2.0 * ridge * v.tensor(i);
    }
    return loss;
  }
};

}  // namespace

Eigen::VectorXd stack_weights(const StackingModel& sm, const CellIndex& cell) {
  return softmax(sm.weights.materialize(cell));
}

Eigen::VectorXd ensemble_eta(const StackingModel& sm,
                             const Eigen::MatrixXd& base_logits,
                             std::span<const CellIndex> cells) {
  if (static_cast<std::int64_t>(cells.size()) != base_logits.rows())
    fail(ErrorCode::dimension_error, "ensemble: cells/rows mismatch");
  if (base_logits.cols() != sm.model_count())
    fail(ErrorCode::dimension_error,
         "ensemble: expected " + std::to_string(sm.model_count()) +
             " logit columns, got " + std::to_string(base_logits.cols()));
  CellBinding bind = bind_cells(sm.weights, cells);
  Eigen::VectorXd eta(base_logits.rows());
  Eigen::VectorXd vrow(sm.model_count());
  for (Eigen::Index j = 0; j < base_logits.rows(); ++j) {
    vrow.setZero();
    for (int i = 0; i < sm.weights.component_count(); ++i)
      vrow += sm.weights.tensor(i)
                  .row(bind[static_cast<std::size_t>(i)]
                           [static_cast<std::size_t>(j)])
                  .transpose();
    eta[j] = softmax(vrow).dot(base_logits.row(j));
  }
  return eta;
}

double leverage(int model_count, std::int64_t n_cell, double cap) {
  if (n_cell < 1) fail(ErrorCode::empty_data, "leverage: empty cell");
  if (!(cap > 0.0) || !(cap < 1.0))
    fail(ErrorCode::config_error, "leverage: cap must lie in (0, 1)");
  return std::min(static_cast<double>(model_count) /
                      static_cast<double>(n_cell),
                  cap);
}

double stacking_loss(const StackingModel& sm,
                     const Eigen::MatrixXd& base_logits,
                     const Eigen::VectorXd& y,
                     std::span<const CellIndex> cells, double leverage_cap,
                     double ridge) {
  Eigen::VectorXd eta = ensemble_eta(sm, base_logits, cells);
  Eigen::VectorXd coef =
      loo_coefficients(sm.lattice, cells, sm.model_count(), leverage_cap);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j)
    loss += coef[j] * family_nll(sm.family, y[j], eta[j]);
  loss /= static_cast<double>(eta.size());
  for (int i = 0; i < sm.weights.component_count(); ++i)
    loss += ridge * sm.weights.tensor(i).squaredNorm();
  return loss;
}

StackingFit fit_stacking(const Eigen::MatrixXd& base_logits,
                         const Eigen::VectorXd& y,
                         std::span<const CellIndex> cells,
                         const LatticeSpec& lattice, const FamilySpec& family,
                         const StackingConfig& cfg) {
  const auto n = base_logits.rows();
  const int m = static_cast<int>(base_logits.cols());
  if (n == 0) fail(ErrorCode::empty_data, "stacking: no observations");
  if (m < 1) fail(ErrorCode::dimension_error, "stacking: no base models");
  if (y.size() != n || static_cast<std::int64_t>(cells.size()) != n)
    fail(ErrorCode::dimension_error, "stacking: row count mismatch");
  for (Eigen::Index j = 0; j < n; ++j) check_response(family, y[j]);

  StackingFit fit;
  fit.model.lattice = lattice;
  fit.model.family = family;
  fit.model.weights =
      DecomposedParameter(lattice.level_counts(), m, cfg.truncation);

  StackingProblem prob{base_logits,
                       y,
                       family,
                       bind_cells(fit.model.weights, cells),
                       loo_coefficients(lattice, cells, m, cfg.leverage_cap),
                       cfg.ridge};

  DecomposedParameter& v = fit.model.weights;
  std::vector<Eigen::MatrixXd> grad, m1, m2;
  grad.resize(static_cast<std::size_t>(v.component_count()));
  m1.resize(grad.size());
  m2.resize(grad.size());
  for (int i = 0; i < v.component_count(); ++i) {
    grad[static_cast<std::size_t>(i)].setZero(v.combo_count(i), m);
    m1[static_cast<std::size_t>(i)] =
        Eigen::MatrixXd::Zero(v.combo_count(i), m);
    m2[static_cast<std::size_t>(i)] =
        Eigen::MatrixXd::Zero(v.combo_count(i), m);
  }

  const FitConfig& oc = cfg.opt;
  const double b1 = oc.adam_beta1, b2 = oc.adam_beta2, eps = oc.adam_eps;
  double prev_loss = std::numeric_limits<double>::quiet_NaN();
  double loss = 0.0;
  int calm = 0;
  double b1t = 1.0, b2t = 1.0;
  Eigen::VectorXd vrow(m), w(m);

  for (int step = 0; step < oc.max_steps; ++step) {
    loss = prob.eval(v, grad, vrow, w);
    if (!std::isfinite(loss))
      fail(ErrorCode::diverged,
           "stacking diverged at step " + std::to_string(step));
    fit.steps = step + 1;
    if (std::isfinite(prev_loss)) {
      double rel = std::abs(loss - prev_loss) / (std::abs(prev_loss) + 1.0);
      calm = rel < oc.tol ? calm + 1 : 0;
      if (calm >= oc.patience) {
        fit.converged = true;
        break;
      }
    }
    prev_loss = loss;

    const double lr = lr_at(oc.lr, step, oc.max_steps);
    b1t *= b1;
    b2t *= b2;
    const double corr = std::sqrt(1.0 - b2t) / (1.0 - b1t);
    for (int i = 0; i < v.component_count(); ++i) {
      auto& gi = grad[static_cast<std::size_t>(i)];
      auto& m1i = m1[static_cast<std::size_t>(i)];
      auto& m2i = m2[static_cast<std::size_t>(i)];
      m1i = b1 * m1i + (1.0 - b1) * gi;
      m2i = b2 * m2i + (1.0 - b2) * gi.cwiseProduct(gi);
      v.tensor(i).array() -=
          lr * corr * m1i.array() / (m2i.array().sqrt() + eps);
    }
  }

  fit.loo_loss = prob.eval(v, grad, vrow, w);
  return fit;
}

}  // namespace hlglm

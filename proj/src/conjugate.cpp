#include "hlglm/conjugate.hpp"

#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <numbers>

#include "hlglm/errors.hpp"

namespace hlglm {

ConjugatePosterior fit_conjugate_nig(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& y,
                                     const NigPrior& prior) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (n == 0) fail(ErrorCode::empty_data, "conjugate fit: no observations");
  if (y.size() != n)
    fail(ErrorCode::dimension_error, "conjugate fit: y length != rows");
  if (!(prior.coef_scale > 0.0) || !(prior.a0 > 0.0) || !(prior.b0 > 0.0))
    fail(ErrorCode::config_error, "conjugate fit: prior parameters must be positive");

  double v0_inv = 1.0 / (prior.coef_scale * prior.coef_scale);
  Eigen::MatrixXd prec = X.transpose() * X;
  prec.diagonal().array() += v0_inv;
  Eigen::LDLT<Eigen::MatrixXd> solver(prec);
  if (solver.info() != Eigen::Success)
    fail(ErrorCode::numerical_error, "conjugate fit: singular posterior precision");

  ConjugatePosterior post;
  post.mean = solver.solve(X.transpose() * y);
  post.scale_cov = solver.solve(Eigen::MatrixXd::Identity(p, p));
  post.a_n = prior.a0 + 0.5 * static_cast<double>(n);
  post.b_n = prior.b0 +
             0.5 * (y.squaredNorm() - post.mean.dot(prec * post.mean));
  if (!(post.b_n > 0.0))
    fail(ErrorCode::numerical_error, "conjugate fit: nonpositive scale b_N");

  post.leverage.resize(n);
  post.residual.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    post.leverage[i] = X.row(i) * post.scale_cov * X.row(i).transpose();
    post.residual[i] = y[i] - X.row(i).dot(post.mean);
  }
  return post;
}

Eigen::VectorXd conjugate_variance(const ConjugatePosterior& post) {
  if (!(post.a_n > 2.0))
    fail(ErrorCode::insufficient_concentration,
         "conjugate variance: a_N = " + std::to_string(post.a_n) +
             " <= 2, fourth-moment term undefined");
  const double a = post.a_n, b = post.b_n;
  const double trig = boost::math::trigamma(a);
  Eigen::VectorXd out(post.leverage.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    double h = post.leverage[i];
    double r2 = post.residual[i] * post.residual[i];
    out[i] = a * r2 * h / b + 0.5 * h * h + 0.25 * trig +
             a * r2 * r2 / (4.0 * b * b) - r2 / (2.0 * b);
  }
  return out;
}

double student_t_logpdf(double y, double nu, double loc, double scale2) {
  double t2 = (y - loc) * (y - loc) / scale2;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi * scale2) -
         0.5 * (nu + 1.0) * std::log1p(t2 / nu);
}

double conjugate_log_predictive(const ConjugatePosterior& post,
                                const Eigen::RowVectorXd& x, double y) {
  if (x.size() != post.mean.size())
    fail(ErrorCode::dimension_error, "conjugate predictive: feature length");
  double h = x * post.scale_cov * x.transpose();
  double loc = x.dot(post.mean);
  double scale2 = (post.b_n / post.a_n) * (1.0 + h);
  return student_t_logpdf(y, 2.0 * post.a_n, loc, scale2);
}

WaicReport conjugate_waic(const ConjugatePosterior& post,
                          const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const auto n = X.rows();
  if (y.size() != n || post.leverage.size() != n)
    fail(ErrorCode::dimension_error, "conjugate waic: shape mismatch");
  WaicReport report;
  report.per_obs_lppd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    report.per_obs_lppd[i] = conjugate_log_predictive(post, X.row(i), y[i]);
  report.per_obs_var = conjugate_variance(post);
  report.lppd_term = -report.per_obs_lppd.sum();
  report.penalty_term = report.per_obs_var.sum();
  report.total = report.lppd_term + report.penalty_term;
  return report;
}

double exact_loo_nig(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const NigPrior& prior) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (n < 2) fail(ErrorCode::empty_data, "exact loo: need at least 2 rows");
  double total = 0.0;
  Eigen::MatrixXd x_rest(n - 1, p);
  Eigen::VectorXd y_rest(n - 1);
  for (Eigen::Index hold = 0; hold < n; ++hold) {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == hold) continue;
      x_rest.row(k) = X.row(i);
      y_rest[k] = y[i];
      ++k;
    }
    ConjugatePosterior post = fit_conjugate_nig(x_rest, y_rest, prior);
    total -= conjugate_log_predictive(post, X.row(hold), y[hold]);
  }
  return total;
}

}  // namespace hlglm

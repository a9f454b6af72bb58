// conjugate.hpp -- closed-form normal-inverse-gamma regression: exact
// posterior, Student-t predictive, the closed-form WAIC variance, and exact
// leave-one-out scores. Used as the oracle against the sampled WAIC path.
#pragma once

#include <Eigen/Dense>

#include "hlglm/evaluation.hpp"

namespace hlglm {

struct NigPrior {
  double coef_scale = 10.0;  // V0 = coef_scale^2 * I (relative to sigma^2)
  double a0 = 2.0;
  double b0 = 2.0;
};

struct ConjugatePosterior {
  Eigen::VectorXd mean;       // posterior coefficient mean
  Eigen::MatrixXd scale_cov;  // V_N with Cov[beta | sigma^2] = sigma^2 V_N
  double a_n = 0.0;           // inverse-gamma shape
  double b_n = 0.0;           // inverse-gamma scale
  Eigen::VectorXd leverage;   // h_n = x_n' V_N x_n per training row
  Eigen::VectorXd residual;   // r_n = y_n - x_n' mean per training row
};

ConjugatePosterior fit_conjugate_nig(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& y,
                                     const NigPrior& prior = {});

// Closed-form per-observation variance of the log-likelihood under the
// posterior: a_N r^2 h / b_N + h^2/2 + trigamma(a_N)/4 + a_N r^4/(4 b_N^2)
// - r^2/(2 b_N). Requires a_N > 2 for the fourth-moment term.
Eigen::VectorXd conjugate_variance(const ConjugatePosterior& post);

// log Student-t density with dof nu, location loc, squared scale scale2.
double student_t_logpdf(double y, double nu, double loc, double scale2);

// log posterior predictive density at (x, y): Student-t with dof 2 a_N and
// squared scale (b_N / a_N)(1 + x' V_N x).
double conjugate_log_predictive(const ConjugatePosterior& post,
                                const Eigen::RowVectorXd& x, double y);

// Exact WAIC for the conjugate model: predictive density term in closed
// form, penalty from conjugate_variance. No sampling involved.
WaicReport conjugate_waic(const ConjugatePosterior& post,
                          const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Exact leave-one-out score -sum_n log p(y_n | data without n), by direct
// per-observation refits.
double exact_loo_nig(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const NigPrior& prior = {});

}  // namespace hlglm

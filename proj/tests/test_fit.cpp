#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "hlglm/fit.hpp"
#include "helpers.hpp"

using namespace hlglm;
using testutil::thrown_code;

namespace {
constexpr double inf = std::numeric_limits<double>::infinity();

Eigen::VectorXd gaussian_y(const Eigen::VectorXd& mean, double sigma,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sigma);
  Eigen::VectorXd y = mean;
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += z(rng);
  return y;
}
}  // namespace

TEST_CASE("lr schedule: ramp to peak, cosine to end") {
  LrSchedule s;
  const int T = 1000;
  CHECK(lr_at(s, 0, T) == doctest::Approx(s.start));
  CHECK(lr_at(s, 100, T) == doctest::Approx(s.peak));  // warmup end
  CHECK(lr_at(s, T, T) == doctest::Approx(s.end));
  CHECK(lr_at(s, 50, T) == doctest::Approx(0.5 * (s.start + s.peak)));
  // single-step fits just use the peak
  CHECK(lr_at(s, 0, 1) == doctest::Approx(s.peak));
  for (int t = 1; t < 100; ++t) CHECK(lr_at(s, t, T) >= lr_at(s, t - 1, T));
  for (int t = 101; t <= T; ++t) CHECK(lr_at(s, t, T) <= lr_at(s, t - 1, T));
}

TEST_CASE("penalized loss gradient matches finite differences") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z(0.0, 1.0);
  for (Family family : {Family::gaussian, Family::bernoulli_logit,
                        Family::poisson_log}) {
    FamilySpec fam{family, family == Family::gaussian ? 1.7 : 1.0};
    std::vector<int> levels{2, 3};
    LatticeSpec spec = testutil::grid(levels);
    const int n = 30;
    std::vector<std::int64_t> flat;
    std::uniform_int_distribution<std::int64_t> cell(0, spec.cell_count() - 1);
    for (int i = 0; i < n; ++i) flat.push_back(cell(rng));
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      if (family == Family::gaussian) y[i] = z(rng);
      if (family == Family::bernoulli_logit) y[i] = (z(rng) > 0.0) ? 1.0 : 0.0;
      if (family == Family::poisson_log)
        y[i] = std::floor(std::abs(z(rng)) * 2.0);
    }
    Dataset data = testutil::dataset_on(spec, flat, y, 1, 33);

    DecomposedParameter intercept(levels, 1, 2);
    DecomposedParameter coeff(levels, 1, 1);
    for (int i = 0; i < intercept.component_count(); ++i)
      for (Eigen::Index r = 0; r < intercept.tensor(i).rows(); ++r)
        intercept.tensor(i)(r, 0) = 0.3 * z(rng);
    for (int i = 0; i < coeff.component_count(); ++i)
      for (Eigen::Index r = 0; r < coeff.tensor(i).rows(); ++r)
        coeff.tensor(i)(r, 0) = 0.3 * z(rng);
    RegularizationPlan plan = build_decay_plan(intercept, coeff, 2.0, 0.8);

    CellBinding bi = bind_cells(intercept, data.cells);
    CellBinding bc = bind_cells(coeff, data.cells);
    std::vector<Eigen::MatrixXd> gi, gc;
    double loss = penalized_loss_grad(data, fam, plan, intercept, coeff, bi,
                                      bc, &gi, &gc);
    CHECK(std::isfinite(loss));

    const double h = 1e-6;
    for (int i = 0; i < intercept.component_count(); ++i)
      for (Eigen::Index r = 0; r < intercept.tensor(i).rows(); ++r) {
        double saved = intercept.tensor(i)(r, 0);
        intercept.tensor(i)(r, 0) = saved + h;
        double up = penalized_loss_grad(data, fam, plan, intercept, coeff, bi,
                                        bc, nullptr, nullptr);
        intercept.tensor(i)(r, 0) = saved - h;
        double dn = penalized_loss_grad(data, fam, plan, intercept, coeff, bi,
                                        bc, nullptr, nullptr);
        intercept.tensor(i)(r, 0) = saved;
        double fd = (up - dn) / (2.0 * h);
        CHECK(gi[static_cast<std::size_t>(i)](r, 0) ==
              doctest::Approx(fd).epsilon(1e-5));
      }
  }
}

TEST_CASE("map_fit reaches the exact ridge optimum") {
  std::vector<int> levels{2};
  LatticeSpec spec = testutil::grid(levels);
  const int n = 60;
  std::vector<std::int64_t> flat;
  for (int i = 0; i < n; ++i) flat.push_back(i % 3 == 0 ? 1 : 0);
  Eigen::VectorXd mean(n);
  for (int i = 0; i < n; ++i) mean[i] = (i % 3 == 0) ? 1.2 : -0.4;
  Dataset data = testutil::dataset_on(spec, flat, gaussian_y(mean, 1.0, 5));

  FitConfig cfg;
  cfg.truncation = 1;
  cfg.max_steps = 20000;  // run the optimizer down to the analytic optimum
  cfg.tol = 1e-12;
  cfg.patience = 20;
  auto [i0, c0] = make_shapes(spec, 0, cfg);
  const double tau = 0.5;
  RegularizationPlan plan = build_fixed_plan(i0, c0, tau);
  plan.intercept.comps[0].tau[0] = inf;  // free global intercept
  FamilySpec fam{Family::gaussian, 1.0};
  FittedModel m = map_fit(data, spec, fam, plan, cfg, i0, c0);
  CHECK(m.diag.converged);

  // reference: (mu, d0, d1) from the penalized normal equations
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1 + data.cells[static_cast<std::size_t>(i)].kappa[0]) = 1.0;
  }
  Eigen::MatrixXd ata = A.transpose() * A;
  ata(1, 1) += 1.0 / (tau * tau);
  ata(2, 2) += 1.0 / (tau * tau);
  Eigen::VectorXd beta = ata.ldlt().solve(A.transpose() * data.y);
  double exact = 0.5 * (data.y - A * beta.head(3)).squaredNorm() +
                 (beta[1] * beta[1] + beta[2] * beta[2]) /
                     (2.0 * tau * tau) +
                 static_cast<double>(n) * 0.5 * std::log(2.0 * std::numbers::pi);

  CHECK(m.diag.final_loss == doctest::Approx(exact).epsilon(1e-7));
  CHECK(m.intercept.tensor(0)(0, 0) == doctest::Approx(beta[0]).epsilon(5e-3));
  CellIndex c0i = spec.from_flat(0);
  CHECK(m.intercept.materialize(c0i)[0] ==
        doctest::Approx(beta[0] + beta[1]).epsilon(1e-3));
}

TEST_CASE("map_fit shape and input contracts") {
  std::vector<int> levels{2};
  LatticeSpec spec = testutil::grid(levels);
  Dataset data = testutil::dataset_on(spec, {0, 1}, Eigen::VectorXd::Zero(2));
  FitConfig cfg;
  cfg.truncation = 1;
  auto [i0, c0] = make_shapes(spec, 0, cfg);
  RegularizationPlan plan = build_fixed_plan(i0, c0, 1.0);
  FamilySpec fam{Family::gaussian, 1.0};

  Dataset empty = data;
  empty.X.resize(0, 1);
  empty.y.resize(0);
  empty.cells.clear();
  CHECK(thrown_code([&] { map_fit(empty, spec, fam, plan, cfg, i0, c0); }) ==
        ErrorCode::empty_data);

  Dataset unbound = data;
  unbound.cells.pop_back();
  CHECK(thrown_code([&] { map_fit(unbound, spec, fam, plan, cfg, i0, c0); }) ==
        ErrorCode::dimension_error);

  LatticeSpec other = testutil::grid({3});
  CHECK(thrown_code([&] { map_fit(data, other, fam, plan, cfg, i0, c0); }) ==
        ErrorCode::model_lattice_mismatch);
}

TEST_CASE("a runaway step size is reported as divergence") {
  std::vector<int> levels{2};
  LatticeSpec spec = testutil::grid(levels);
  Eigen::VectorXd y(8);
  y << 3, 1, 4, 1, 5, 9, 2, 6;
  Dataset data = testutil::dataset_on(spec, {0, 1, 0, 1, 0, 1, 0, 1}, y);
  FitConfig cfg;
  cfg.truncation = 1;
  cfg.max_steps = 50;
  cfg.lr.peak = 1e3;
  cfg.lr.start = 1e3;
  auto [i0, c0] = make_shapes(spec, 0, cfg);
  RegularizationPlan plan = build_free_plan(i0, c0);
  FamilySpec fam{Family::poisson_log, 1.0};
  CHECK(thrown_code([&] {
          map_fit(data, spec, fam, plan, cfg, std::move(i0), std::move(c0));
        }) == ErrorCode::diverged);
}

TEST_CASE("predictions and mean_nll agree with the family pointwise") {
  std::vector<int> levels{2, 2};
  LatticeSpec spec = testutil::grid(levels);
  const int n = 80;
  std::vector<std::int64_t> flat;
  for (int i = 0; i < n; ++i) flat.push_back(i % 4);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  Dataset data =
      testutil::dataset_on(spec, flat, gaussian_y(mean, 1.0, 9), 2, 17);
  FitConfig cfg;
  cfg.truncation = 1;
  auto [i0, c0] = make_shapes(spec, 2, cfg);
  RegularizationPlan plan = build_fixed_plan(i0, c0, 1.0);
  FamilySpec fam{Family::gaussian, 1.0};
  FittedModel m =
      map_fit(data, spec, fam, plan, cfg, std::move(i0), std::move(c0));

  Predictions pr = predict(m, data);
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd a = m.intercept.materialize(data.cells[static_cast<std::size_t>(j)]);
    Eigen::VectorXd b = m.coeff.materialize(data.cells[static_cast<std::size_t>(j)]);
    double eta = a[0] + b.dot(data.X.row(j).segment(1, 2));
    CHECK(pr.eta[j] == doctest::Approx(eta).epsilon(1e-12));
    CHECK(pr.mu[j] == doctest::Approx(eta).epsilon(1e-12));
    acc += family_nll(fam, data.y[j], eta);
  }
  CHECK(mean_nll(m, data) ==
        doctest::Approx(acc / static_cast<double>(n)).epsilon(1e-12));
}

TEST_CASE("laplace blocks carry the ridge precision at the mode") {
  std::vector<int> levels{1};
  LatticeSpec spec = testutil::grid(levels);
  const int n = 50;
  std::vector<std::int64_t> flat(n, 0);
  Eigen::VectorXd mean = Eigen::VectorXd::Constant(n, 0.7);
  Dataset data =
      testutil::dataset_on(spec, flat, gaussian_y(mean, 1.0, 31), 1, 12);
  FitConfig cfg;
  cfg.truncation = 0;
  auto [i0, c0] = make_shapes(spec, 1, cfg);
  const double tau = 0.7;
  RegularizationPlan plan = build_fixed_plan(i0, c0, tau);
  const double s2 = 2.0;
  FamilySpec fam{Family::gaussian, s2};
  FittedModel m =
      map_fit(data, spec, fam, plan, cfg, std::move(i0), std::move(c0));

  LaplacePosterior lp = laplace_posterior(m, data);
  double prec_int = static_cast<double>(n) / s2 + 1.0 / (tau * tau);
  CHECK(laplace_block_cov(lp, true, 0, 0)(0, 0) ==
        doctest::Approx(1.0 / prec_int).epsilon(1e-10));
  double sxx = data.X.col(1).squaredNorm() / s2 + 1.0 / (tau * tau);
  CHECK(laplace_block_cov(lp, false, 0, 0)(0, 0) ==
        doctest::Approx(1.0 / sxx).epsilon(1e-10));
}

TEST_CASE("estimate_sigma recovers the noise scale") {
  std::vector<int> levels{2};
  LatticeSpec spec = testutil::grid(levels);
  const int n = 4000;
  std::vector<std::int64_t> flat;
  for (int i = 0; i < n; ++i) flat.push_back(i % 2);
  Eigen::VectorXd mean = Eigen::VectorXd::Constant(n, 3.0);
  Dataset data = testutil::dataset_on(spec, flat, gaussian_y(mean, 2.0, 77));
  FamilySpec fam{Family::gaussian, 1.0};
  double s = estimate_sigma(data, fam);
  CHECK(s > 1.9);
  CHECK(s < 2.1);

  // bernoulli: effective scale from the base-rate fisher weight
  Eigen::VectorXd yb(4);
  yb << 0, 1, 0, 1;
  Dataset db = testutil::dataset_on(spec, {0, 1, 0, 1}, yb);
  FamilySpec bern{Family::bernoulli_logit, 1.0};
  CHECK(estimate_sigma(db, bern) == doctest::Approx(2.0));  // 1/sqrt(0.25)
}

TEST_CASE("fit_adaptive: gaussian single pass at the estimated scale") {
  std::vector<int> levels{2};
  LatticeSpec spec = testutil::grid(levels);
  const int n = 500;
  std::vector<std::int64_t> flat;
  for (int i = 0; i < n; ++i) flat.push_back(i % 2);
  Eigen::VectorXd mean(n);
  for (int i = 0; i < n; ++i) mean[i] = (i % 2 == 0) ? 0.5 : -0.5;
  Dataset data = testutil::dataset_on(spec, flat, gaussian_y(mean, 1.0, 13));
  FitConfig cfg;
  cfg.truncation = 1;
  FamilySpec fam{Family::gaussian, 1.0};
  FittedModel m = fit_adaptive(data, spec, fam, cfg);
  double sigma_hat = estimate_sigma(data, fam);
  CHECK(m.plan.sigma == doctest::Approx(sigma_hat));
  CHECK(m.family.dispersion == doctest::Approx(sigma_hat * sigma_hat));
  CHECK(m.fisher.iterations == 0);
  CHECK(m.fisher.converged);
  // the order-1 component honors the per-combo bound
  CHECK(m.plan.intercept.comps[1].tau[0] ==
        doctest::Approx(tau_gaussian(sigma_hat, 1, n / 2)));
}

TEST_CASE("fit_adaptive: fisher reweighting settles or reports") {
  std::vector<int> levels{2};
  LatticeSpec spec = testutil::grid(levels);
  const int n = 400;
  std::vector<std::int64_t> flat;
  Eigen::VectorXd y(n);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    flat.push_back(i % 2);
    double p = (i % 2 == 0) ? 0.7 : 0.3;
    y[i] = u(rng) < p ? 1.0 : 0.0;
  }
  Dataset data = testutil::dataset_on(spec, flat, y);
  FitConfig cfg;
  cfg.truncation = 1;
  FamilySpec fam{Family::bernoulli_logit, 1.0};
  FittedModel m = fit_adaptive(data, spec, fam, cfg);
  CHECK(m.fisher.converged);
  CHECK(m.fisher.iterations >= 1);
  CHECK(m.fisher.global_wbar > 0.0);
  CHECK(m.fisher.global_wbar <= 0.25 + 1e-9);

  AdaptiveOptions strict;
  strict.max_outer = 1;
  strict.tol = 0.0;
  CHECK(thrown_code([&] { fit_adaptive(data, spec, fam, cfg, strict); }) ==
        ErrorCode::non_convergence);
  strict.error_on_nonconvergence = false;
  FittedModel loose = fit_adaptive(data, spec, fam, cfg, strict);
  CHECK_FALSE(loose.fisher.converged);
}

TEST_CASE("optimizer never ends above its starting loss") {
  std::vector<int> levels{3};
  LatticeSpec spec = testutil::grid(levels);
  const int n = 90;
  std::vector<std::int64_t> flat;
  for (int i = 0; i < n; ++i) flat.push_back(i % 3);
  Eigen::VectorXd mean(n);
  for (int i = 0; i < n; ++i) mean[i] = 0.3 * static_cast<double>(i % 3);
  Dataset data = testutil::dataset_on(spec, flat, gaussian_y(mean, 0.5, 41));
  FitConfig cfg;
  cfg.truncation = 1;
  auto [i0, c0] = make_shapes(spec, 0, cfg);
  RegularizationPlan plan = build_fixed_plan(i0, c0, 2.0);
  FamilySpec fam{Family::gaussian, 1.0};
  CellBinding bi = bind_cells(i0, data.cells);
  CellBinding bc = bind_cells(c0, data.cells);
  double at_zero = penalized_loss_grad(data, fam, plan, i0, c0, bi, bc,
                                       nullptr, nullptr);
  FittedModel m =
      map_fit(data, spec, fam, plan, cfg, std::move(i0), std::move(c0));
  CHECK(m.diag.final_loss <= at_zero);
  CHECK(m.diag.train_nll + m.diag.penalty ==
        doctest::Approx(m.diag.final_loss).epsilon(1e-9));
}

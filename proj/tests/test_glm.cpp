#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hlglm/glm.hpp"
#include "helpers.hpp"

using namespace hlglm;
using testutil::thrown_code;

TEST_CASE("family names round-trip") {
  for (Family f : {Family::gaussian, Family::bernoulli_logit,
                   Family::poisson_log})
    CHECK(family_from_name(family_name(f)) == f);
  CHECK(thrown_code([] { family_from_name("gamma"); }) ==
        ErrorCode::config_error);
}

TEST_CASE("gaussian nll: closed form with constants") {
  FamilySpec fam{Family::gaussian, 4.0};  // sigma^2 = 4
  double want = 0.5 * std::log(2.0 * std::numbers::pi * 4.0) + 1.0 / 8.0;
  CHECK(family_nll(fam, 1.0, 0.0) == doctest::Approx(want).epsilon(1e-12));
  CHECK(family_mean(fam, 2.5) == doctest::Approx(2.5));
  CHECK(fisher_weight(fam, 0.0) == doctest::Approx(0.25));
}

TEST_CASE("bernoulli nll: logit link") {
  FamilySpec fam{Family::bernoulli_logit, 1.0};
  CHECK(family_nll(fam, 1.0, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(family_nll(fam, 0.0, 0.0) == doctest::Approx(std::log(2.0)));
  // log(1 + e^-2) for y=1 at eta=2
  CHECK(family_nll(fam, 1.0, 2.0) ==
        doctest::Approx(std::log1p(std::exp(-2.0))));
  CHECK(family_mean(fam, 0.0) == doctest::Approx(0.5));
  CHECK(fisher_weight(fam, 0.5) == doctest::Approx(0.25));
  // extreme eta must not overflow
  CHECK(std::isfinite(family_nll(fam, 0.0, 700.0)));
  CHECK(std::isfinite(family_nll(fam, 1.0, -700.0)));
}

TEST_CASE("poisson nll: log link with the log-factorial constant") {
  FamilySpec fam{Family::poisson_log, 1.0};
  // lambda = 1: nll = 1 - y*0 + log(y!)
  CHECK(family_nll(fam, 2.0, 0.0) == doctest::Approx(1.0 + std::log(2.0)));
  CHECK(family_nll(fam, 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(family_mean(fam, 1.0) == doctest::Approx(std::exp(1.0)));
  CHECK(fisher_weight(fam, 3.0) == doctest::Approx(3.0));
}

TEST_CASE("dnll/deta matches central finite differences") {
  const double h = 1e-6;
  struct Case { FamilySpec fam; double y; };
  Case cases[] = {
      {{Family::gaussian, 2.0}, 1.3},
      {{Family::bernoulli_logit, 1.0}, 1.0},
      {{Family::bernoulli_logit, 1.0}, 0.0},
      {{Family::poisson_log, 1.0}, 4.0},
  };
  for (const auto& c : cases)
    for (double eta : {-1.5, -0.2, 0.0, 0.7, 2.0}) {
      double fd = (family_nll(c.fam, c.y, eta + h) -
                   family_nll(c.fam, c.y, eta - h)) / (2.0 * h);
      CHECK(family_dnll_deta(c.fam, c.y, eta) ==
            doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("linear predictor is a plain dot product") {
  double theta[] = {1.0, -2.0, 0.5};
  double x[] = {1.0, 3.0, 2.0};
  CHECK(linear_predictor(theta, x) == doctest::Approx(-4.0));
}

TEST_CASE("response domains are enforced per family") {
  FamilySpec bern{Family::bernoulli_logit, 1.0};
  FamilySpec pois{Family::poisson_log, 1.0};
  FamilySpec gauss{Family::gaussian, 1.0};
  CHECK(thrown_code([&] { check_response(bern, 0.5); }) ==
        ErrorCode::invalid_response);
  CHECK(thrown_code([&] { check_response(pois, -1.0); }) ==
        ErrorCode::invalid_response);
  CHECK(thrown_code([&] { check_response(pois, 2.5); }) ==
        ErrorCode::invalid_response);
  CHECK(thrown_code([&] { check_response(gauss, std::nan("")); }) ==
        ErrorCode::invalid_response);
  CHECK(thrown_code([&] { check_response(gauss, 1e10); }) == ErrorCode::ok);
  CHECK(thrown_code([&] { check_response(pois, 7.0); }) == ErrorCode::ok);
  CHECK(thrown_code([] { FamilySpec f{Family::gaussian, 0.0}; family_nll(f, 0, 0); }) ==
        ErrorCode::numerical_error);
}

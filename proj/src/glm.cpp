#include "hlglm/glm.hpp"

#include <cmath>

#include "hlglm/errors.hpp"

namespace hlglm {

namespace {
constexpr double half_log_2pi = 0.91893853320467274178;  // log(2*pi)/2

double check_dispersion(const FamilySpec& fam) {
  if (!(fam.dispersion > 0.0))
    fail(ErrorCode::numerical_error, "dispersion must be positive");
  return fam.dispersion;
}
}  // namespace

const char* family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::bernoulli_logit: return "bernoulli-logit";
    case Family::poisson_log: return "poisson-log";
  }
  return "unknown";
}

Family family_from_name(const std::string& name) {
  if (name == "gaussian") return Family::gaussian;
  if (name == "bernoulli-logit" || name == "bernoulli")
    return Family::bernoulli_logit;
  if (name == "poisson-log" || name == "poisson") return Family::poisson_log;
  fail(ErrorCode::config_error, "unknown family '" + name + "'");
}

double linear_predictor(std::span<const double> theta,
                        std::span<const double> x) {
  if (theta.size() != x.size())
    fail(ErrorCode::dimension_error,
         "coefficient/feature length mismatch: " + std::to_string(theta.size()) +
             " vs " + std::to_string(x.size()));
  double eta = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) eta += theta[i] * x[i];
  return eta;
}

double family_mean(const FamilySpec& fam, double eta) {
  switch (fam.family) {
    case Family::gaussian:
      return eta;
    case Family::bernoulli_logit:
      // stable logistic on both tails
      if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
      {
        double e = std::exp(eta);
        return e / (1.0 + e);
      }
    case Family::poisson_log:
      return std::exp(eta);
  }
  fail(ErrorCode::config_error, "unknown family");
}

double family_nll(const FamilySpec& fam, double y, double eta) {
  switch (fam.family) {
    case Family::gaussian: {
      double s2 = check_dispersion(fam);
      double r = y - eta;
      return half_log_2pi + 0.5 * std::log(s2) + r * r / (2.0 * s2);
    }
    case Family::bernoulli_logit:
      // -y*eta + log(1 + e^eta), rewritten per sign so the exp never overflows
      if (eta > 0.0) return (1.0 - y) * eta + std::log1p(std::exp(-eta));
      return -y * eta + std::log1p(std::exp(eta));
    case Family::poisson_log:
      return std::exp(eta) - y * eta + std::lgamma(y + 1.0);
  }
  fail(ErrorCode::config_error, "unknown family");
}

double family_dnll_deta(const FamilySpec& fam, double y, double eta) {
  switch (fam.family) {
    case Family::gaussian:
      return (eta - y) / check_dispersion(fam);
    case Family::bernoulli_logit:
      return family_mean(fam, eta) - y;
    case Family::poisson_log:
      return std::exp(eta) - y;
  }
  fail(ErrorCode::config_error, "unknown family");
}

double fisher_weight(const FamilySpec& fam, double mu) {
  switch (fam.family) {
    case Family::gaussian:
      return 1.0 / check_dispersion(fam);
    case Family::bernoulli_logit:
      return mu * (1.0 - mu);
    case Family::poisson_log:
      return mu;
  }
  fail(ErrorCode::config_error, "unknown family");
}

void check_response(const FamilySpec& fam, double y) {
  if (!std::isfinite(y))
    fail(ErrorCode::invalid_response, "non-finite response");
  switch (fam.family) {
    case Family::gaussian:
      return;
    case Family::bernoulli_logit:
      if (y != 0.0 && y != 1.0)
        fail(ErrorCode::invalid_response,
             "bernoulli response must be 0 or 1, got " + std::to_string(y));
      return;
    case Family::poisson_log:
      if (y < 0.0 || y != std::floor(y))
        fail(ErrorCode::invalid_response,
             "poisson response must be a nonnegative integer, got " +
                 std::to_string(y));
      return;
  }
}

}  // namespace hlglm

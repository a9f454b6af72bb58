// glm.hpp -- exponential-family response models with canonical links:
// gaussian (identity), bernoulli (logit), poisson (log).
#pragma once

#include <span>
#include <string>

namespace hlglm {

enum class Family { gaussian, bernoulli_logit, poisson_log };

struct FamilySpec {
  Family family = Family::gaussian;
  double dispersion = 1.0;  // gaussian sigma^2; fixed at 1 otherwise
};

const char* family_name(Family f);
Family family_from_name(const std::string& name);

// eta = <theta, x>
double linear_predictor(std::span<const double> theta,
                        std::span<const double> x);

// Response mean under the canonical inverse link.
double family_mean(const FamilySpec& fam, double eta);

// Negative log-likelihood of one observation, constants included.
double family_nll(const FamilySpec& fam, double y, double eta);

// d(nll)/d(eta); equals (mean - y) up to the gaussian 1/sigma^2 factor.
double family_dnll_deta(const FamilySpec& fam, double y, double eta);

// Fisher weight at a given mean: 1/sigma^2, mu(1-mu), or mu.
double fisher_weight(const FamilySpec& fam, double mu);

// Response-domain check; violations are InvalidResponse errors.
void check_response(const FamilySpec& fam, double y);

}  // namespace hlglm

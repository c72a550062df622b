#pragma once

#include <chrono>
#include <span>
#include <utility>
#include <vector>

#include "copreg/estimators.hpp"

namespace copreg::detail {

/// Family support, link compatibility and non-constant responses.
void check_fit_input(const LongitudinalSample& d, ResponseFamily f, LinkFunction link);

double mean_of(std::span<const double> y);

/// Distinct-response summary of one intercept-only margin. Gamma log
/// likelihoods and derivatives are affine in (y, log y), so one weighted
/// pseudo-observation at the means is exact; negbin groups equal counts.
struct WeightedResponse {
  double y{0.0};
  double log_y{0.0};
  double w{1.0};
};
std::vector<WeightedResponse> compress_responses(std::span<const double> y, ResponseFamily f);

/// Method-of-moments log sigma for an intercept-only margin.
double moment_log_sigma(std::span<const double> y, ResponseFamily f);
/// Same on both time points pooled around their common mean.
double pooled_moment_log_sigma(const LongitudinalSample& d, ResponseFamily f);

struct LogSigmaFit {
  double log_sigma{0.0};
  double loglik{0.0};
  int iterations{0};
  bool converged{false};
  bool boundary{false};
};

/// Safeguarded Newton for a common log sigma over groups of responses with
/// fixed linear predictors.
LogSigmaFit maximize_log_sigma(const std::vector<std::pair<std::span<const double>, double>>& groups, ResponseFamily f,
                               LinkFunction link, double s0);
LogSigmaFit maximize_log_sigma(const std::vector<std::pair<std::vector<WeightedResponse>, double>>& groups,
                               ResponseFamily f, LinkFunction link, double s0);

double elapsed_ms(std::chrono::steady_clock::time_point start);

/// Converts a marginal-form result to the requested parameterization.
void finish_param(FitResult& r, Parameterization p);

}  // namespace copreg::detail

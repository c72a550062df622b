#pragma once

#include <optional>
#include <string>

#include "copreg/estimators.hpp"

namespace copreg {

/// Information criteria for one fitted model. Criteria are absent when the
/// fit has no likelihood (GEE).
struct SelectionRow {
  std::string model_tag;
  std::optional<double> loglik;
  double edf{0.0};
  std::optional<double> aic;
  std::optional<double> gaic_k;
  std::optional<double> bic;
  std::size_t n_obs{0};
};

/// GLMM rows use the conditional likelihood at the subject modes with the
/// ridge-trace EDF; every other model uses its parameter count.
SelectionRow criteria(const FitResult& r, double k = 4.0, std::size_t n_obs = 0);

/// Fixed-parameter count plus sum_i w_i / (w_i + 1 / tau^2).
double glmm_edf(const FitResult& r);

}  // namespace copreg

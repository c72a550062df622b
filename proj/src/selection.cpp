#include "copreg/selection.hpp"

#include <cmath>

#include "copreg/errors.hpp"

namespace copreg {

double glmm_edf(const FitResult& r) {
  if (r.model != ModelKind::glmm) throw DomainError("glmm_edf: not a GLMM fit");
  const double fixed = static_cast<double>(r.names.size());
  const double tau = r.nuisance_value("re_sd");
  if (!(tau > 0.0) || r.diagnostics.boundary) return fixed;
  const double prior = 1.0 / (tau * tau);
  double trace = 0.0;
  for (double w : r.subject_information) trace += w / (w + prior);
  return fixed + trace;
}

SelectionRow criteria(const FitResult& r, double k, std::size_t n_obs) {
  SelectionRow row;
  row.model_tag = r.model_tag;
  row.n_obs = n_obs == 0 ? 2 * r.n_subjects : n_obs;
  row.edf = r.model == ModelKind::glmm ? glmm_edf(r) : r.edf;
  row.loglik = r.model == ModelKind::glmm ? r.conditional_loglik : r.loglik;
  if (!row.loglik) return row;
  if (!(row.edf > 0.0)) throw DomainError("criteria: loglik present but edf missing");
  const double dev = -2.0 * *row.loglik;
  row.aic = dev + 2.0 * row.edf;
  row.gaic_k = dev + k * row.edf;
  row.bic = dev + std::log(static_cast<double>(row.n_obs)) * row.edf;
  return row;
}

}  // namespace copreg

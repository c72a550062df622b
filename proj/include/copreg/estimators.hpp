#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "copreg/copulas.hpp"
#include "copreg/distributions.hpp"
#include "copreg/optimize.hpp"

namespace copreg {

enum class ParamKind { marginal, time_effect };

/// marginal: eta_t = beta1 [t=1] + beta2 [t=2]; time_effect: eta_t = beta1 + beta_t [t=2].
struct Parameterization {
  ParamKind kind{ParamKind::marginal};
  bool operator==(const Parameterization&) const = default;
};

std::string_view to_string(ParamKind kind);
ParamKind parse_param_kind(std::string_view name);

enum class ModelKind { glm, gee, glmm, gjrm };
std::string_view to_string(ModelKind kind);

struct FitDiagnostics {
  /// u or v values moved onto [1e-12, 1 - 1e-12] at the final estimate.
  std::size_t clipped_points{0};
  /// Log densities clamped at the representable floor.
  std::size_t clamped_densities{0};
  /// Observed information was not positive definite and was repaired.
  bool hessian_repaired{false};
  /// Random-intercept SD estimated at (or next to) zero.
  bool boundary{false};
  int restarts_used{0};
  std::string message;
};

/// Uniform result of every fitter.
///
/// `names` / `estimates` / `vcov` cover the parameters whose sampling variance
/// is reported, on the scale they were estimated (log sigma, unconstrained
/// copula parameter). `nuisance` holds natural-scale summaries without SEs
/// (GEE dispersion and working correlation, copula theta and tau, RE SD).
struct FitResult {
  std::string model_tag;
  ModelKind model{ModelKind::glm};
  Parameterization param;
  ResponseFamily family;
  LinkFunction link;
  std::optional<CopulaModel> copula;

  std::vector<std::string> names;
  Eigen::VectorXd estimates;
  Eigen::MatrixXd vcov;
  std::vector<std::pair<std::string, double>> nuisance;

  /// Absent for GEE. For GLMM this is the marginal (integrated) likelihood.
  std::optional<double> loglik;
  /// GLMM only: sum of log f(y | b) at the per-subject modes.
  std::optional<double> conditional_loglik;
  double edf{0.0};
  /// GLMM only: conditional information about each subject's intercept at its mode.
  std::vector<double> subject_information;
  std::size_t n_subjects{0};

  bool converged{false};
  int iterations{0};
  double wall_ms{0.0};
  FitDiagnostics diagnostics;

  bool has(std::string_view name) const;
  std::size_t index(std::string_view name) const;
  double estimate(std::string_view name) const;
  double se(std::string_view name) const;
  Eigen::VectorXd se() const;
  double nuisance_value(std::string_view name) const;
  /// Fitted marginal-model mean at time t (1 or 2) from the beta coefficients.
  double mu_hat(int t) const;
};

struct FitOptions {
  OptimOptions optim;
};

struct GlmmOptions {
  /// Separate log sigma per time point.
  bool sigma_time_varying{false};
  std::size_t quad_points{21};
  OptimOptions optim;
};

struct GjrmOptions {
  int rotation{0};
  /// Starting df for the student_t copula.
  double df_start{8.0};
  /// Fix the copula parameter at its starting value (used for separability checks).
  std::optional<double> fixed_theta;
  OptimOptions optim;
};

/// Independence likelihood with one common sigma.
FitResult fit_glm(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, Parameterization p,
                  const FitOptions& opts = {});

/// Exchangeable working correlation, Pearson moment estimates, sandwich variance.
FitResult fit_gee(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, Parameterization p,
                  const FitOptions& opts = {});

/// Random-intercept model by adaptive Gauss-Hermite maximum likelihood.
FitResult fit_glmm(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, Parameterization p,
                   const GlmmOptions& opts = {});

/// Copula joint regression with separate sigma per margin.
FitResult fit_gjrm(const LongitudinalSample& d, ResponseFamily f1, ResponseFamily f2, LinkFunction link,
                   CopulaFamily copula, Parameterization p, const GjrmOptions& opts = {});

struct TimeEffect {
  double beta_t{0.0};
  double se{0.0};
};

/// beta_t = beta2 - beta1 with Var = Var(b2) + Var(b1) - 2 Cov(b1, b2).
TimeEffect extract_time_effect(const FitResult& r);

/// Re-express (beta1, beta2) <-> (beta1, beta_t) by the exact linear map,
/// transforming vcov with its Jacobian.
FitResult reparameterize(const FitResult& r, ParamKind target);

/// Per-margin maximum likelihood for an intercept-only model: (eta, log sigma).
std::pair<double, double> marginal_mle(std::span<const double> y, ResponseFamily f, LinkFunction link);

}  // namespace copreg

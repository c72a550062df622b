#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "copreg/errors.hpp"
#include "copreg/rng.hpp"

namespace copreg {

// ---------------------------------------------------------------------------
// Response families (GAMLSS mean/dispersion convention)
// ---------------------------------------------------------------------------

enum class FamilyKind { normal, gamma, negbin };

/// normal: Var = sigma^2; gamma: Var = sigma^2 mu^2; negbin (NB2): Var = mu + sigma mu^2.
struct ResponseFamily {
  FamilyKind kind{FamilyKind::normal};

  bool discrete() const { return kind == FamilyKind::negbin; }
  bool operator==(const ResponseFamily&) const = default;
};

std::string_view to_string(FamilyKind kind);
ResponseFamily parse_family(std::string_view name);

enum class LinkKind { identity, log };

struct LinkFunction {
  LinkKind kind{LinkKind::identity};

  double link(double mu) const;
  double inverse(double eta) const;
  /// d mu / d eta at eta.
  double mu_eta(double eta) const;
  bool operator==(const LinkFunction&) const = default;
};

std::string_view to_string(LinkKind kind);
LinkFunction canonical_link(ResponseFamily family);

enum class FamilyQuantity { pdf, logpdf, cdf, quantile };

/// Checks family-domain validity of (mu, sigma). Throws DomainError.
void check_family_params(ResponseFamily family, double mu, double sigma);

/// pdf/logpdf/cdf at y, or quantile at probability y.
double family_eval(ResponseFamily family, double mu, double sigma, double y, FamilyQuantity what);

double family_variance(ResponseFamily family, double mu, double sigma);
double family_skewness(ResponseFamily family, double mu, double sigma);

/// Marginal distribution with per-(mu, sigma) constants hoisted out of inner loops.
class Marginal {
 public:
  Marginal(ResponseFamily family, double mu, double sigma);

  double logpdf(double y) const;
  double cdf(double y) const;
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

 private:
  ResponseFamily family_;
  double mu_;
  double sigma_;
  double shape_{0.0};      // gamma shape or negbin size
  double scale_{0.0};      // gamma scale
  double log_norm_{0.0};   // family-dependent normalizer
  double log_p_{0.0};      // negbin log(sigma mu / (1 + sigma mu))
  double log_q_{0.0};      // negbin log(1 / (1 + sigma mu))
};

/// log pmf and cdf of a negbin margin on 0..max_count, filled by recurrence.
struct CountTable {
  std::vector<double> logpmf;
  std::vector<double> cdf;
};
CountTable negbin_table(double mu, double sigma, std::size_t max_count);

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// n subjects observed at two time points.
struct LongitudinalSample {
  std::vector<double> y1;
  std::vector<double> y2;
  /// Optional 1-based source line numbers (set by CSV ingestion).
  std::vector<std::size_t> line1;
  std::vector<std::size_t> line2;

  std::size_t size() const { return y1.size(); }
  /// Shape and finiteness checks.
  void validate() const;
};

/// Throws DomainError naming the offending observation (and source line when
/// known) if any value lies outside the family support.
void validate_for_family(const LongitudinalSample& d, ResponseFamily family);

// ---------------------------------------------------------------------------
// Bivariate generators
// ---------------------------------------------------------------------------

enum class Generator { biv_normal, biv_negbin, biv_gamma };

std::string_view to_string(Generator g);
Generator parse_generator(std::string_view name);

/// Generator identity with its raw parameters.
///
/// biv_normal: mu1, mu2, sigma1, sigma2 (SDs), rho.
/// biv_negbin: t1, t2, theta_mix (Gamma scale of the shared rate), k (its shape);
///             derived mu_t = t_t k theta_mix, sigma = 1/k.
/// biv_gamma:  mu1, mu2, sigma (GAMLSS), theta (mixing Beta's second shape);
///             derived alpha = 1/sigma^2.
struct TrueScenario {
  Generator generator{Generator::biv_normal};
  double mu1{0.0};
  double mu2{0.0};
  double sigma1{1.0};
  double sigma2{1.0};
  double rho{0.0};
  double t1{1.0};
  double t2{1.0};
  double theta_mix{1.0};
  double k{1.0};
  double sigma{1.0};
  double theta{1.0};

  static TrueScenario biv_normal(double mu1, double mu2, double sigma1, double sigma2, double rho);
  static TrueScenario biv_negbin(double t1, double t2, double theta_mix, double k);
  static TrueScenario biv_gamma(double mu1, double mu2, double sigma, double theta);

  void validate() const;

  ResponseFamily family() const;
  LinkFunction link() const;
  double mean1() const;
  double mean2() const;
  /// GAMLSS dispersion of each margin.
  double gamlss_sigma1() const;
  double gamlss_sigma2() const;
  /// True regression coefficients on the link scale.
  double beta1() const { return link().link(mean1()); }
  double beta2() const { return link().link(mean2()); }
  double beta_t() const { return beta2() - beta1(); }
  double skew1() const;
  double skew2() const;
  /// Exact Pearson correlation of the generator.
  double pearson_rho() const;
  /// For biv_gamma: the closed form sigma sqrt(theta) / (1 + sigma^2 + sigma^2 theta)
  /// quoted alongside the construction. Differs from pearson_rho() unless alpha == theta.
  double published_gamma_correlation() const;
  /// Kendall's tau when a closed form exists (biv_normal only).
  std::optional<double> closed_form_tau() const;

  std::string describe() const;
};

LongitudinalSample sample_biv_normal(const TrueScenario& s, std::size_t n, std::uint64_t seed);
LongitudinalSample sample_biv_negbin(const TrueScenario& s, std::size_t n, std::uint64_t seed);
LongitudinalSample sample_biv_gamma(const TrueScenario& s, std::size_t n, std::uint64_t seed);
/// Dispatch on s.generator, drawing from the caller's stream.
LongitudinalSample sample_scenario(const TrueScenario& s, std::size_t n, Rng& rng);
LongitudinalSample sample_scenario(const TrueScenario& s, std::size_t n, std::uint64_t seed);

/// Joint density of the bivariate Gamma via the Whittaker-function closed form.
double biv_gamma_pdf(double y1, double y2, const TrueScenario& s);
double biv_gamma_logpdf(double y1, double y2, const TrueScenario& s);
/// Joint pmf of the compound-Poisson pair (negative multinomial).
double biv_negbin_logpmf(long y1, long y2, const TrueScenario& s);

struct ScenarioTruth {
  double tau{0.0};
  double skew1{0.0};
  double skew2{0.0};
  double pearson_rho{0.0};
  /// Asymptotic SEs at n_obs subjects from the correctly specified joint likelihood.
  double se_beta1{0.0};
  double se_beta2{0.0};
  double se_beta_t{0.0};
  bool tau_from_mc{false};
};

struct TruthOptions {
  std::size_t mc_n{1'000'000};
  std::uint64_t seed{20240601};
  std::size_t n_obs{1000};
  bool compute_se{true};
  /// Draws used for the Monte Carlo expected information (negbin, gamma).
  std::size_t se_mc_n{40'000};
};

ScenarioTruth scenario_truth(const TrueScenario& s, const TruthOptions& opts = {});

}  // namespace copreg

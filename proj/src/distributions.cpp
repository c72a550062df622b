#include "copreg/distributions.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "copreg/detail/math_policy.hpp"
#include "copreg/specfun.hpp"

namespace copreg {

using detail::fast_policy;

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::normal: return "normal";
    case FamilyKind::gamma: return "gamma";
    case FamilyKind::negbin: return "negbin";
  }
  return "?";
}

ResponseFamily parse_family(std::string_view name) {
  if (name == "normal") return {FamilyKind::normal};
  if (name == "gamma") return {FamilyKind::gamma};
  if (name == "negbin") return {FamilyKind::negbin};
  throw ParseError("unknown family '" + std::string(name) + "' (expected normal|gamma|negbin)");
}

std::string_view to_string(LinkKind kind) { return kind == LinkKind::identity ? "identity" : "log"; }

double LinkFunction::link(double mu) const {
  if (kind == LinkKind::identity) return mu;
  if (!(mu > 0.0)) throw DomainError("log link requires mu > 0");
  return std::log(mu);
}

double LinkFunction::inverse(double eta) const {
  return kind == LinkKind::identity ? eta : std::exp(eta);
}

double LinkFunction::mu_eta(double eta) const {
  return kind == LinkKind::identity ? 1.0 : std::exp(eta);
}

LinkFunction canonical_link(ResponseFamily family) {
  return family.kind == FamilyKind::normal ? LinkFunction{LinkKind::identity}
                                           : LinkFunction{LinkKind::log};
}

void check_family_params(ResponseFamily family, double mu, double sigma) {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || !(sigma > 0.0)) {
    throw DomainError("family parameters must be finite with sigma > 0");
  }
  if (family.kind != FamilyKind::normal && !(mu > 0.0)) {
    throw DomainError(std::string(to_string(family.kind)) + " family requires mu > 0");
  }
}

namespace {

bool is_count(double y) { return y >= 0.0 && std::floor(y) == y; }

}  // namespace

Marginal::Marginal(ResponseFamily family, double mu, double sigma)
    : family_(family), mu_(mu), sigma_(sigma) {
  check_family_params(family, mu, sigma);
  switch (family.kind) {
    case FamilyKind::normal:
      log_norm_ = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
      break;
    case FamilyKind::gamma:
      shape_ = 1.0 / (sigma * sigma);
      scale_ = mu * sigma * sigma;
      log_norm_ = -boost::math::lgamma(shape_, fast_policy()) - shape_ * std::log(scale_);
      break;
    case FamilyKind::negbin:
      shape_ = 1.0 / sigma;
      log_norm_ = -boost::math::lgamma(shape_, fast_policy());
      log_q_ = -std::log1p(sigma * mu);
      log_p_ = std::log(sigma * mu) + log_q_;
      break;
  }
}

double Marginal::logpdf(double y) const {
  switch (family_.kind) {
    case FamilyKind::normal: {
      const double z = (y - mu_) / sigma_;
      return log_norm_ - 0.5 * z * z;
    }
    case FamilyKind::gamma:
      if (!(y > 0.0)) return -std::numeric_limits<double>::infinity();
      return log_norm_ + (shape_ - 1.0) * std::log(y) - y / scale_;
    case FamilyKind::negbin:
      if (!is_count(y)) return -std::numeric_limits<double>::infinity();
      return boost::math::lgamma(y + shape_, fast_policy()) - boost::math::lgamma(y + 1.0, fast_policy()) +
             log_norm_ + y * log_p_ + shape_ * log_q_;
  }
  return 0.0;
}

double Marginal::cdf(double y) const {
  switch (family_.kind) {
    case FamilyKind::normal:
      return normal_cdf((y - mu_) / sigma_);
    case FamilyKind::gamma:
      if (!(y > 0.0)) return 0.0;
      return boost::math::gamma_p(shape_, y / scale_, fast_policy());
    case FamilyKind::negbin:
      if (y < 0.0) return 0.0;
      return boost::math::ibeta(shape_, std::floor(y) + 1.0, std::exp(log_q_), fast_policy());
  }
  return 0.0;
}

CountTable negbin_table(double mu, double sigma, std::size_t max_count) {
  check_family_params({FamilyKind::negbin}, mu, sigma);
  const double r = 1.0 / sigma;
  const double log_q = -std::log1p(sigma * mu);
  const double log_p = std::log(sigma * mu) + log_q;
  CountTable t;
  t.logpmf.resize(max_count + 1);
  t.cdf.resize(max_count + 1);
  double lp = r * log_q;
  double acc = 0.0;
  for (std::size_t k = 0; k <= max_count; ++k) {
    if (k > 0) {
      const double kk = static_cast<double>(k);
      lp += std::log((kk - 1.0 + r) / kk) + log_p;
    }
    t.logpmf[k] = lp;
    acc += std::exp(lp);
    t.cdf[k] = std::min(acc, 1.0);
  }
  return t;
}

double family_eval(ResponseFamily family, double mu, double sigma, double y, FamilyQuantity what) {
  check_family_params(family, mu, sigma);
  const Marginal m(family, mu, sigma);
  switch (what) {
    case FamilyQuantity::logpdf:
      return m.logpdf(y);
    case FamilyQuantity::pdf:
      return std::exp(m.logpdf(y));
    case FamilyQuantity::cdf:
      return m.cdf(y);
    case FamilyQuantity::quantile: {
      const double p = y;
      if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile probability must lie in (0,1)");
      if (family.kind == FamilyKind::normal) return mu + sigma * normal_quantile(p);
      if (family.kind == FamilyKind::gamma) {
        const double shape = 1.0 / (sigma * sigma);
        return boost::math::gamma_p_inv(shape, p, fast_policy()) * mu * sigma * sigma;
      }
      // smallest integer with cdf >= p
      const double sd = std::sqrt(family_variance(family, mu, sigma));
      double guess = std::max(0.0, std::floor(mu + sd * normal_quantile(p)));
      while (guess > 0.0 && m.cdf(guess - 1.0) >= p) guess -= 1.0;
      while (m.cdf(guess) < p) guess += 1.0;
      return guess;
    }
  }
  return 0.0;
}

double family_variance(ResponseFamily family, double mu, double sigma) {
  switch (family.kind) {
    case FamilyKind::normal: return sigma * sigma;
    case FamilyKind::gamma: return sigma * sigma * mu * mu;
    case FamilyKind::negbin: return mu + sigma * mu * mu;
  }
  return 0.0;
}

double family_skewness(ResponseFamily family, double mu, double sigma) {
  switch (family.kind) {
    case FamilyKind::normal: return 0.0;
    case FamilyKind::gamma: return 2.0 * sigma;
    case FamilyKind::negbin: return (1.0 + 2.0 * sigma * mu) / std::sqrt(mu * (1.0 + sigma * mu));
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

void LongitudinalSample::validate() const {
  if (y1.size() != y2.size()) throw DomainError("LongitudinalSample: y1 and y2 differ in length");
  if (y1.size() < 2) throw DomainError("LongitudinalSample: need at least 2 subjects");
  for (std::size_t i = 0; i < y1.size(); ++i) {
    if (!std::isfinite(y1[i]) || !std::isfinite(y2[i])) {
      throw DomainError("LongitudinalSample: non-finite response for subject " + std::to_string(i));
    }
  }
}

void validate_for_family(const LongitudinalSample& d, ResponseFamily family) {
  d.validate();
  auto where = [&](std::size_t i, int t) {
    const auto& lines = t == 1 ? d.line1 : d.line2;
    std::string s = "subject " + std::to_string(i) + " time " + std::to_string(t);
    if (i < lines.size()) s = "line " + std::to_string(lines[i]) + " (" + s + ")";
    return s;
  };
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (int t = 1; t <= 2; ++t) {
      const double y = t == 1 ? d.y1[i] : d.y2[i];
      if (family.kind == FamilyKind::gamma && !(y > 0.0)) {
        throw DomainError("gamma family requires y > 0: " + where(i, t) + " has y=" + std::to_string(y));
      }
      if (family.kind == FamilyKind::negbin && !is_count(y)) {
        throw DomainError("negbin family requires non-negative integer counts: " + where(i, t) +
                          " has y=" + std::to_string(y));
      }
    }
  }
}

// ---------------------------------------------------------------------------

std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::biv_normal: return "normal";
    case Generator::biv_negbin: return "negbin";
    case Generator::biv_gamma: return "gamma";
  }
  return "?";
}

Generator parse_generator(std::string_view name) {
  if (name == "normal" || name == "biv_normal") return Generator::biv_normal;
  if (name == "negbin" || name == "biv_negbin") return Generator::biv_negbin;
  if (name == "gamma" || name == "biv_gamma") return Generator::biv_gamma;
  throw ParseError("unknown generator '" + std::string(name) + "'");
}

TrueScenario TrueScenario::biv_normal(double mu1, double mu2, double sigma1, double sigma2, double rho) {
  TrueScenario s;
  s.generator = Generator::biv_normal;
  s.mu1 = mu1;
  s.mu2 = mu2;
  s.sigma1 = sigma1;
  s.sigma2 = sigma2;
  s.rho = rho;
  s.validate();
  return s;
}

TrueScenario TrueScenario::biv_negbin(double t1, double t2, double theta_mix, double k) {
  TrueScenario s;
  s.generator = Generator::biv_negbin;
  s.t1 = t1;
  s.t2 = t2;
  s.theta_mix = theta_mix;
  s.k = k;
  s.validate();
  return s;
}

TrueScenario TrueScenario::biv_gamma(double mu1, double mu2, double sigma, double theta) {
  TrueScenario s;
  s.generator = Generator::biv_gamma;
  s.mu1 = mu1;
  s.mu2 = mu2;
  s.sigma = sigma;
  s.theta = theta;
  s.validate();
  return s;
}

void TrueScenario::validate() const {
  auto positive = [](double v, const char* what) {
    if (!std::isfinite(v) || !(v > 0.0)) throw DomainError(std::string("scenario: ") + what + " must be > 0");
  };
  switch (generator) {
    case Generator::biv_normal:
      positive(sigma1, "sigma1");
      positive(sigma2, "sigma2");
      if (!(rho > -1.0 && rho < 1.0)) throw DomainError("scenario: rho must lie in (-1,1)");
      if (!std::isfinite(mu1) || !std::isfinite(mu2)) throw DomainError("scenario: means must be finite");
      break;
    case Generator::biv_negbin:
      positive(t1, "t1");
      positive(t2, "t2");
      positive(theta_mix, "theta_mix");
      positive(k, "k");
      break;
    case Generator::biv_gamma:
      positive(mu1, "mu1");
      positive(mu2, "mu2");
      positive(sigma, "sigma");
      positive(theta, "theta");
      break;
  }
}

ResponseFamily TrueScenario::family() const {
  switch (generator) {
    case Generator::biv_normal: return {FamilyKind::normal};
    case Generator::biv_negbin: return {FamilyKind::negbin};
    case Generator::biv_gamma: return {FamilyKind::gamma};
  }
  return {};
}

LinkFunction TrueScenario::link() const { return canonical_link(family()); }

double TrueScenario::mean1() const {
  return generator == Generator::biv_negbin ? t1 * k * theta_mix : mu1;
}

double TrueScenario::mean2() const {
  return generator == Generator::biv_negbin ? t2 * k * theta_mix : mu2;
}

double TrueScenario::gamlss_sigma1() const {
  switch (generator) {
    case Generator::biv_normal: return sigma1;
    case Generator::biv_negbin: return 1.0 / k;
    case Generator::biv_gamma: return sigma;
  }
  return 0.0;
}

double TrueScenario::gamlss_sigma2() const {
  return generator == Generator::biv_normal ? sigma2 : gamlss_sigma1();
}

double TrueScenario::skew1() const { return family_skewness(family(), mean1(), gamlss_sigma1()); }
double TrueScenario::skew2() const { return family_skewness(family(), mean2(), gamlss_sigma2()); }

double TrueScenario::pearson_rho() const {
  switch (generator) {
    case Generator::biv_normal:
      return rho;
    case Generator::biv_negbin: {
      const double s = 1.0 / k;
      const double m1 = mean1();
      const double m2 = mean2();
      return m1 * m2 * s / std::sqrt((m1 + s * m1 * m1) * (m2 + s * m2 * m2));
    }
    case Generator::biv_gamma: {
      // Cov(WU, WV) = Var(W) E(U) E(V) gives theta / (alpha + theta + 1).
      const double alpha = 1.0 / (sigma * sigma);
      return theta / (alpha + theta + 1.0);
    }
  }
  return 0.0;
}

double TrueScenario::published_gamma_correlation() const {
  if (generator != Generator::biv_gamma) throw DomainError("published_gamma_correlation: not a biv_gamma scenario");
  const double s2 = sigma * sigma;
  return sigma * std::sqrt(theta) / (1.0 + s2 + s2 * theta);
}

std::optional<double> TrueScenario::closed_form_tau() const {
  if (generator == Generator::biv_normal) return 2.0 / std::numbers::pi * std::asin(rho);
  return std::nullopt;
}

std::string TrueScenario::describe() const {
  std::ostringstream os;
  os.precision(6);
  switch (generator) {
    case Generator::biv_normal:
      os << "normal(mu1=" << mu1 << ",mu2=" << mu2 << ",sigma1=" << sigma1 << ",sigma2=" << sigma2
         << ",rho=" << rho << ")";
      break;
    case Generator::biv_negbin:
      os << "negbin(t1=" << t1 << ",t2=" << t2 << ",theta=" << theta_mix << ",k=" << k << ")";
      break;
    case Generator::biv_gamma:
      os << "gamma(mu1=" << mu1 << ",mu2=" << mu2 << ",sigma=" << sigma << ",theta=" << theta << ")";
      break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Samplers

namespace {

void require(const TrueScenario& s, Generator g) {
  if (s.generator != g) {
    throw DomainError("sampler called with a " + std::string(to_string(s.generator)) + " scenario");
  }
  s.validate();
}

LongitudinalSample draw_normal(const TrueScenario& s, std::size_t n, Rng& rng) {
  LongitudinalSample d;
  d.y1.resize(n);
  d.y2.resize(n);
  const double c = std::sqrt(1.0 - s.rho * s.rho);
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    d.y1[i] = s.mu1 + s.sigma1 * z1;
    d.y2[i] = s.mu2 + s.sigma2 * (s.rho * z1 + c * z2);
  }
  return d;
}

LongitudinalSample draw_negbin(const TrueScenario& s, std::size_t n, Rng& rng) {
  LongitudinalSample d;
  d.y1.resize(n);
  d.y2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // shared rate: shape k, scale theta_mix so that sigma = 1/k
    const double lambda = rng.gamma(s.k, s.theta_mix);
    d.y1[i] = static_cast<double>(rng.poisson(lambda * s.t1));
    d.y2[i] = static_cast<double>(rng.poisson(lambda * s.t2));
  }
  return d;
}

LongitudinalSample draw_gamma(const TrueScenario& s, std::size_t n, Rng& rng) {
  LongitudinalSample d;
  d.y1.resize(n);
  d.y2.resize(n);
  const double alpha = 1.0 / (s.sigma * s.sigma);
  const double shape = alpha + s.theta;
  const double scale1 = s.mu1 / alpha;
  const double scale2 = s.mu2 / alpha;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = rng.beta(alpha, s.theta);
    d.y1[i] = w * rng.gamma(shape, scale1);
    d.y2[i] = w * rng.gamma(shape, scale2);
  }
  return d;
}

}  // namespace

LongitudinalSample sample_biv_normal(const TrueScenario& s, std::size_t n, std::uint64_t seed) {
  require(s, Generator::biv_normal);
  Rng rng = Rng::stream(seed, {});
  return draw_normal(s, n, rng);
}

LongitudinalSample sample_biv_negbin(const TrueScenario& s, std::size_t n, std::uint64_t seed) {
  require(s, Generator::biv_negbin);
  Rng rng = Rng::stream(seed, {});
  return draw_negbin(s, n, rng);
}

LongitudinalSample sample_biv_gamma(const TrueScenario& s, std::size_t n, std::uint64_t seed) {
  require(s, Generator::biv_gamma);
  Rng rng = Rng::stream(seed, {});
  return draw_gamma(s, n, rng);
}

LongitudinalSample sample_scenario(const TrueScenario& s, std::size_t n, Rng& rng) {
  s.validate();
  switch (s.generator) {
    case Generator::biv_normal: return draw_normal(s, n, rng);
    case Generator::biv_negbin: return draw_negbin(s, n, rng);
    case Generator::biv_gamma: return draw_gamma(s, n, rng);
  }
  return {};
}

LongitudinalSample sample_scenario(const TrueScenario& s, std::size_t n, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, {});
  return sample_scenario(s, n, rng);
}

// ---------------------------------------------------------------------------
// Joint densities

double biv_gamma_logpdf(double y1, double y2, const TrueScenario& s) {
  require(s, Generator::biv_gamma);
  if (!(y1 > 0.0) || !(y2 > 0.0)) throw DomainError("biv_gamma_pdf: y1 and y2 must be > 0");
  const double alpha = 1.0 / (s.sigma * s.sigma);
  const double beta = s.theta;
  const double ab = alpha + beta;
  // scales of the underlying Gamma(alpha + beta, .) variates
  const double a1 = s.mu1 / alpha;
  const double a2 = s.mu2 / alpha;
  const double p = y1 / a1 + y2 / a2;
  if (!std::isfinite(p)) return -std::numeric_limits<double>::infinity();
  // Gamma(beta) in the normalizer cancels against the Whittaker integral
  const double log_c = -(ab * (std::log(a1) + std::log(a2)) + log_gamma(ab) + log_gamma(alpha));
  const double lambda_w = 0.5 * (alpha + 1.0);
  const double mu_w = 0.5 * alpha + beta;
  return log_c + (ab - 1.0) * (std::log(y1) + std::log(y2)) +
         (0.5 * (alpha - 1.0) - ab) * std::log(p) - 0.5 * p + log_whittaker_w(lambda_w, mu_w, p);
}

double biv_gamma_pdf(double y1, double y2, const TrueScenario& s) {
  return std::exp(biv_gamma_logpdf(y1, y2, s));
}

namespace {

double negbin_joint_logpmf(long y1, long y2, double m1, double m2, double sig) {
  const double r = 1.0 / sig;
  const double a = static_cast<double>(y1);
  const double b = static_cast<double>(y2);
  return log_gamma(a + b + r) - log_gamma(r) - log_gamma(a + 1.0) - log_gamma(b + 1.0) +
         a * std::log(sig * m1) + b * std::log(sig * m2) - (a + b + r) * std::log1p(sig * (m1 + m2));
}

}  // namespace

double biv_negbin_logpmf(long y1, long y2, const TrueScenario& s) {
  require(s, Generator::biv_negbin);
  if (y1 < 0 || y2 < 0) return -std::numeric_limits<double>::infinity();
  return negbin_joint_logpmf(y1, y2, s.mean1(), s.mean2(), 1.0 / s.k);
}

// ---------------------------------------------------------------------------
// Truths

namespace {

// SEs of (beta1, beta2, beta_t) from a per-observation expected information
// estimated as the Monte Carlo mean of score outer products.
template <typename LogDensity>
void expected_information_se(const LongitudinalSample& d, const Eigen::VectorXd& par, LogDensity&& logf,
                             std::size_t n_obs, ScenarioTruth& out) {
  const auto p = par.size();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd score(p);
  const double h = 1e-5;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      Eigen::VectorXd up = par;
      Eigen::VectorXd dn = par;
      up[j] += h;
      dn[j] -= h;
      score[j] = (logf(d.y1[i], d.y2[i], up) - logf(d.y1[i], d.y2[i], dn)) / (2.0 * h);
    }
    info.noalias() += score * score.transpose();
  }
  info /= static_cast<double>(d.size());
  const Eigen::MatrixXd cov = info.inverse() / static_cast<double>(n_obs);
  out.se_beta1 = std::sqrt(cov(0, 0));
  out.se_beta2 = std::sqrt(cov(1, 1));
  out.se_beta_t = std::sqrt(std::max(0.0, cov(0, 0) + cov(1, 1) - 2.0 * cov(0, 1)));
}

}  // namespace

ScenarioTruth scenario_truth(const TrueScenario& s, const TruthOptions& opts) {
  s.validate();
  ScenarioTruth t;
  t.skew1 = s.skew1();
  t.skew2 = s.skew2();
  t.pearson_rho = s.pearson_rho();
  if (auto tau = s.closed_form_tau()) {
    t.tau = *tau;
  } else {
    if (opts.mc_n < 1000) throw DomainError("scenario_truth: mc_n too small for a Monte Carlo tau");
    Rng rng = Rng::stream(opts.seed, {0x7A75ULL});
    const LongitudinalSample d = sample_scenario(s, opts.mc_n, rng);
    t.tau = kendall_tau(d.y1, d.y2);
    t.tau_from_mc = true;
  }
  if (!opts.compute_se) return t;

  const double n = static_cast<double>(opts.n_obs);
  switch (s.generator) {
    case Generator::biv_normal:
      t.se_beta1 = s.sigma1 / std::sqrt(n);
      t.se_beta2 = s.sigma2 / std::sqrt(n);
      t.se_beta_t = std::sqrt(s.sigma1 * s.sigma1 + s.sigma2 * s.sigma2 - 2.0 * s.rho * s.sigma1 * s.sigma2) /
                    std::sqrt(n);
      break;
    case Generator::biv_negbin: {
      Rng rng = Rng::stream(opts.seed, {0x5E5EULL});
      const LongitudinalSample d = sample_scenario(s, opts.se_mc_n, rng);
      Eigen::VectorXd par(3);
      par << std::log(s.mean1()), std::log(s.mean2()), std::log(1.0 / s.k);
      expected_information_se(
          d, par,
          [](double y1, double y2, const Eigen::VectorXd& q) {
            return negbin_joint_logpmf(static_cast<long>(y1), static_cast<long>(y2), std::exp(q[0]),
                                       std::exp(q[1]), std::exp(q[2]));
          },
          opts.n_obs, t);
      break;
    }
    case Generator::biv_gamma: {
      Rng rng = Rng::stream(opts.seed, {0x5E5FULL});
      const LongitudinalSample d = sample_scenario(s, opts.se_mc_n, rng);
      Eigen::VectorXd par(4);
      par << std::log(s.mu1), std::log(s.mu2), std::log(s.sigma), std::log(s.theta);
      expected_information_se(
          d, par,
          [](double y1, double y2, const Eigen::VectorXd& q) {
            TrueScenario g;
            g.generator = Generator::biv_gamma;
            g.mu1 = std::exp(q[0]);
            g.mu2 = std::exp(q[1]);
            g.sigma = std::exp(q[2]);
            g.theta = std::exp(q[3]);
            return biv_gamma_logpdf(y1, y2, g);
          },
          opts.n_obs, t);
      break;
    }
  }
  return t;
}

}  // namespace copreg

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "copreg/distributions.hpp"
#include "copreg/specfun.hpp"
#include "oracles.hpp"

using namespace copreg;

namespace {

struct Moments {
  double m1, m2, v1, v2, cov;
};

Moments moments(const LongitudinalSample& d) {
  const double n = static_cast<double>(d.size());
  Moments m{0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    m.m1 += d.y1[i] / n;
    m.m2 += d.y2[i] / n;
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    m.v1 += (d.y1[i] - m.m1) * (d.y1[i] - m.m1) / (n - 1);
    m.v2 += (d.y2[i] - m.m2) * (d.y2[i] - m.m2) / (n - 1);
    m.cov += (d.y1[i] - m.m1) * (d.y2[i] - m.m2) / (n - 1);
  }
  return m;
}

// One-sample KS statistic against the uniform law.
double ks_uniform(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max({d, (i + 1) / n - u[i], u[i] - i / n});
  }
  return d;
}

const ResponseFamily kNormal{FamilyKind::normal};
const ResponseFamily kGamma{FamilyKind::gamma};
const ResponseFamily kNegbin{FamilyKind::negbin};

}  // namespace

TEST(Family, SpecExamples) {
  EXPECT_NEAR(family_eval(kNormal, 0, 1, 0, FamilyQuantity::pdf), 1 / std::sqrt(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(family_eval(kGamma, 2, 1, 2, FamilyQuantity::cdf), 1 - std::exp(-1.0), 1e-12);
  EXPECT_NEAR(family_eval(kNegbin, 1, 1, 0, FamilyQuantity::pdf), 0.5, 1e-14);
}

TEST(Family, VarianceConventions) {
  EXPECT_DOUBLE_EQ(family_variance(kNormal, 3, 2), 4.0);
  EXPECT_DOUBLE_EQ(family_variance(kGamma, 3, 0.5), 0.25 * 9);
  EXPECT_DOUBLE_EQ(family_variance(kNegbin, 3, 0.5), 3 + 0.5 * 9);
  // numeric variance of the negbin pmf
  const auto t = negbin_table(3.0, 0.5, 400);
  double m = 0;
  double v = 0;
  for (std::size_t y = 0; y < t.logpmf.size(); ++y) m += y * std::exp(t.logpmf[y]);
  for (std::size_t y = 0; y < t.logpmf.size(); ++y) v += (y - m) * (y - m) * std::exp(t.logpmf[y]);
  EXPECT_NEAR(m, 3.0, 1e-10);
  EXPECT_NEAR(v, 7.5, 1e-9);
}

TEST(Family, QuantileIsGeneralizedInverse) {
  for (double p : {0.01, 0.3, 0.5, 0.77, 0.99}) {
    const double qn = family_eval(kNormal, 1, 2, p, FamilyQuantity::quantile);
    EXPECT_NEAR(family_eval(kNormal, 1, 2, qn, FamilyQuantity::cdf), p, 1e-10);
    const double qg = family_eval(kGamma, 4, 0.7, p, FamilyQuantity::quantile);
    EXPECT_NEAR(family_eval(kGamma, 4, 0.7, qg, FamilyQuantity::cdf), p, 1e-9);
    const double qb = family_eval(kNegbin, 4, 0.7, p, FamilyQuantity::quantile);
    EXPECT_EQ(qb, std::floor(qb));
    EXPECT_GE(family_eval(kNegbin, 4, 0.7, qb, FamilyQuantity::cdf), p);
    if (qb > 0) EXPECT_LT(family_eval(kNegbin, 4, 0.7, qb - 1, FamilyQuantity::cdf), p);
  }
}

TEST(Family, CdfMonotoneWithLimits) {
  for (ResponseFamily f : {kNormal, kGamma, kNegbin}) {
    double prev = 0.0;
    for (double y = f.kind == FamilyKind::normal ? -30.0 : 0.0; y < 200.0; y += 0.5) {
      const double c = family_eval(f, 5, 0.8, f.discrete() ? std::floor(y) : y, FamilyQuantity::cdf);
      EXPECT_GE(c, prev - 1e-15);
      prev = c;
    }
    EXPECT_NEAR(prev, 1.0, 1e-8);
  }
}

TEST(Family, LinkRoundTrip) {
  const LinkFunction lg{LinkKind::log};
  const LinkFunction id{LinkKind::identity};
  for (double mu : {1e-3, 0.7, 3.0, 250.0}) {
    EXPECT_NEAR(lg.inverse(lg.link(mu)), mu, 1e-12 * mu);
    EXPECT_NEAR(id.inverse(id.link(mu)), mu, 1e-12 * mu);
  }
  EXPECT_THROW(lg.link(-1.0), DomainError);
  EXPECT_THROW(check_family_params(kGamma, -1.0, 1.0), DomainError);
  EXPECT_THROW(check_family_params(kNormal, 1.0, 0.0), DomainError);
}

TEST(Family, PitUniformity) {
  Rng rng(3);
  for (ResponseFamily f : {kNormal, kGamma}) {
    std::vector<double> u(10000);
    for (double& v : u) {
      const double y = family_eval(f, 2.0, 0.6, rng.uniform(), FamilyQuantity::quantile);
      v = family_eval(f, 2.0, 0.6, y, FamilyQuantity::cdf);
    }
    EXPECT_LT(ks_uniform(u), 1.63 / std::sqrt(10000.0));
  }
  // gamma draws from the rng path rather than inversion
  std::vector<double> u(10000);
  for (double& v : u) v = family_eval(kGamma, 3.0, 0.5, rng.gamma(4.0, 0.75), FamilyQuantity::cdf);
  EXPECT_LT(ks_uniform(u), 1.63 / std::sqrt(10000.0));
}

TEST(Sample, ValidateForFamily) {
  LongitudinalSample d{{1, 2, 3}, {1, -2, 3}, {}, {}};
  EXPECT_THROW(validate_for_family(d, kNegbin), DomainError);
  d.y2 = {1, 2.5, 3};
  EXPECT_THROW(validate_for_family(d, kNegbin), DomainError);
  d.y2 = {1, 2, 3};
  EXPECT_NO_THROW(validate_for_family(d, kNegbin));
  d.line1 = {2, 4, 6};
  d.line2 = {3, 5, 7};
  d.y2[1] = -1;
  try {
    validate_for_family(d, kNegbin);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
  }
}

TEST(BivNormal, Moments) {
  const auto s0 = TrueScenario::biv_normal(1, 2, 1.5, 0.5, 0.0);
  const auto d0 = sample_biv_normal(s0, 100000, 1);
  const auto m0 = moments(d0);
  EXPECT_NEAR(m0.cov / std::sqrt(m0.v1 * m0.v2), 0.0, 3 / std::sqrt(100000.0));
  EXPECT_NEAR(m0.m1, 1.0, 3 * 1.5 / std::sqrt(100000.0));
  EXPECT_NEAR(m0.m2, 2.0, 3 * 0.5 / std::sqrt(100000.0));
  const auto s9 = TrueScenario::biv_normal(1, 2, 1, 1, 0.9);
  const auto d9 = sample_biv_normal(s9, 100000, 2);
  EXPECT_NEAR(kendall_tau(d9.y1, d9.y2), 2 / std::numbers::pi * std::asin(0.9), 0.02);
}

TEST(BivNegbin, CompoundPoissonMoments) {
  const auto s = TrueScenario::biv_negbin(1, 1, 1, 1);
  const auto d = sample_biv_negbin(s, 1'000'000, 3);
  const auto m = moments(d);
  EXPECT_NEAR(m.m1, 1.0, 0.01);
  EXPECT_NEAR(m.v1, 2.0, 0.03);
  EXPECT_NEAR(m.cov, 1.0, 0.03);
  EXPECT_NEAR(s.mean1(), 1.0, 1e-15);
  EXPECT_NEAR(s.gamlss_sigma1(), 1.0, 1e-15);

  const auto weak = TrueScenario::biv_negbin(1, 1, 1e-3, 1e3);
  const auto dw = sample_biv_negbin(weak, 100000, 4);
  EXPECT_NEAR(moments(dw).cov, 0.0, 0.02);
}

TEST(BivNegbin, MethodOfMomentsSigma) {
  for (auto [t1, t2, th, k] : {std::tuple{0.5, 2.0, 1.3, 0.8}, std::tuple{3.0, 1.0, 0.4, 2.5}}) {
    const auto s = TrueScenario::biv_negbin(t1, t2, th, k);
    const auto d = sample_biv_negbin(s, 400000, 5);
    const auto m = moments(d);
    const double sigma_hat = (m.v1 - m.m1) / (m.m1 * m.m1);
    EXPECT_NEAR(sigma_hat, 1.0 / k, 0.05 / k) << s.describe();
    EXPECT_NEAR(m.m1, t1 * k * th, 4 * std::sqrt(s.mean1() + s.mean1() * s.mean1() / k) / std::sqrt(400000.0));
  }
}

TEST(BivNegbin, JointPmfSumsAndMargins) {
  const auto s = TrueScenario::biv_negbin(0.8, 1.5, 1.1, 1.7);
  double total = 0;
  double m1 = 0;
  const auto table = negbin_table(s.mean1(), s.gamlss_sigma1(), 150);
  for (long a = 0; a < 150; ++a) {
    double row = 0;
    for (long b = 0; b < 150; ++b) row += std::exp(biv_negbin_logpmf(a, b, s));
    total += row;
    m1 += a * row;
    if (a < 20) EXPECT_NEAR(row, std::exp(table.logpmf[static_cast<std::size_t>(a)]), 1e-10) << a;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_NEAR(m1, s.mean1(), 1e-7);
}

TEST(BivGamma, SamplerMomentsAndCorrelation) {
  const auto s = TrueScenario::biv_gamma(3.0, 3.6, 1.0, 1.0);
  const auto d = sample_biv_gamma(s, 1'000'000, 6);
  const auto m = moments(d);
  const double rho = m.cov / std::sqrt(m.v1 * m.v2);
  EXPECT_NEAR(m.m1, 3.0, 4 * 3.0 / 1000.0);
  EXPECT_NEAR(m.v1, 9.0, 0.2);
  // alpha = theta here, so both forms of the correlation agree at 1/3
  EXPECT_NEAR(s.published_gamma_correlation(), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.pearson_rho(), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(rho, 1.0 / 3.0, 0.01);
}

TEST(BivGamma, ExactCorrelationOffDiagonal) {
  // alpha != theta: the generator's correlation is theta / (alpha + theta + 1)
  const auto s = TrueScenario::biv_gamma(5.0, 6.0, std::sqrt(0.5), 1.7);
  const double alpha = 2.0;
  EXPECT_NEAR(s.pearson_rho(), 1.7 / (alpha + 1.7 + 1.0), 1e-12);
  const auto d = sample_biv_gamma(s, 400000, 7);
  const auto m = moments(d);
  EXPECT_NEAR(m.cov / std::sqrt(m.v1 * m.v2), s.pearson_rho(), 0.01);
}

TEST(BivGamma, WeakMixingHasSmallTau) {
  const auto s = TrueScenario::biv_gamma(3.0, 3.6, 1.0, 1e-3);
  const auto d = sample_biv_gamma(s, 50000, 8);
  EXPECT_LT(kendall_tau(d.y1, d.y2), 0.05);
}

TEST(BivGamma, PdfSymmetryAndMarginal) {
  const auto sym = TrueScenario::biv_gamma(2.0, 2.0, 0.8, 1.3);
  EXPECT_NEAR(biv_gamma_pdf(0.7, 3.1, sym), biv_gamma_pdf(3.1, 0.7, sym), 1e-12 * biv_gamma_pdf(0.7, 3.1, sym));
  const auto s = TrueScenario::biv_gamma(2.0, 2.4, 0.9, 0.6);
  for (double y1 : {0.4, 1.5, 3.7}) {
    boost::math::quadrature::exp_sinh<double> es;
    const double marg = es.integrate([&](double y2) { return biv_gamma_pdf(y1, y2, s); });
    EXPECT_NEAR(marg, family_eval(kGamma, 2.0, 0.9, y1, FamilyQuantity::pdf), 1e-4) << y1;
  }
}

TEST(BivGamma, PdfIntegratesToOne) {
  const auto s = TrueScenario::biv_gamma(2.0, 2.4, 0.9, 0.6);
  boost::math::quadrature::exp_sinh<double> es;
  const double total = es.integrate(
      [&](double y1) { return es.integrate([&](double y2) { return biv_gamma_pdf(y1, y2, s); }); });
  EXPECT_NEAR(total, 1.0, 1e-3);
}

TEST(BivGamma, PdfAtExtremeArguments) {
  for (const auto& s : {TrueScenario::biv_gamma(10.0, 12.0, 1.0, 1.0),
                        TrueScenario::biv_gamma(21.0, 25.2, std::sqrt(2.1), 2.1)}) {
    for (double y : {1e-300, 1e-100, 1e-10, 1e10, 1e300}) {
      // alpha < 1 makes the density unbounded at the origin; its log stays finite
      EXPECT_TRUE(std::isfinite(biv_gamma_logpdf(y, y, s))) << y;
      EXPECT_GE(biv_gamma_pdf(y, 1.0, s), 0.0) << y;
    }
    boost::math::quadrature::exp_sinh<double> es;
    const double total = es.integrate(
        [&](double y1) { return es.integrate([&](double y2) { return biv_gamma_pdf(y1, y2, s); }); });
    EXPECT_NEAR(total, 1.0, 1e-3) << s.describe();
  }
}

TEST(Sampling, SeededDeterminism) {
  for (const auto& s : {TrueScenario::biv_normal(1, 2, 1, 2, 0.4), TrueScenario::biv_negbin(1, 2, 0.5, 1.5),
                        TrueScenario::biv_gamma(3, 3.6, 0.7, 1.1)}) {
    const auto a = sample_scenario(s, 500, 77);
    const auto b = sample_scenario(s, 500, 77);
    EXPECT_EQ(a.y1, b.y1);
    EXPECT_EQ(a.y2, b.y2);
  }
}

TEST(Sampling, GridMomentsWithinFourStandardErrors) {
  const std::size_t n = 100000;
  for (const auto& s : {TrueScenario::biv_normal(1, 2, 0.25, 2.5, 0.7), TrueScenario::biv_negbin(4.0, 0.2, 2.0, 0.6),
                        TrueScenario::biv_gamma(21, 25.2, std::sqrt(2.1), 0.2)}) {
    const auto d = sample_scenario(s, n, 9);
    const auto m = moments(d);
    const ResponseFamily f = s.family();
    const double var1 = family_variance(f, s.mean1(), s.gamlss_sigma1());
    const double var2 = family_variance(f, s.mean2(), s.gamlss_sigma2());
    EXPECT_NEAR(m.m1, s.mean1(), 4 * std::sqrt(var1 / n)) << s.describe();
    EXPECT_NEAR(m.m2, s.mean2(), 4 * std::sqrt(var2 / n)) << s.describe();
    // sample-variance SE from the fourth moment: sqrt((mu4 - var^2) / n)
    auto var_se = [&](const std::vector<double>& y, double mean) {
      double m4 = 0;
      double m2 = 0;
      for (double v : y) {
        m2 += (v - mean) * (v - mean) / n;
        m4 += std::pow(v - mean, 4) / n;
      }
      return std::sqrt((m4 - m2 * m2) / n);
    };
    EXPECT_NEAR(m.v1, var1, 4 * var_se(d.y1, m.m1)) << s.describe();
    EXPECT_NEAR(m.v2, var2, 4 * var_se(d.y2, m.m2)) << s.describe();
  }
}

TEST(Truth, ClosedFormsAndSe) {
  const auto s = TrueScenario::biv_normal(1, 2, 1.5, 0.5, 0.5);
  TruthOptions o;
  o.mc_n = 200000;
  const auto t = scenario_truth(s, o);
  EXPECT_NEAR(t.tau, 1.0 / 3.0, 1e-12);
  EXPECT_FALSE(t.tau_from_mc);
  EXPECT_NEAR(t.se_beta1, 1.5 / std::sqrt(1000.0), 1e-6);
  const auto g = TrueScenario::biv_gamma(3, 3.6, std::sqrt(2.0), 2.1);
  TruthOptions og;
  og.mc_n = 200000;
  og.compute_se = false;
  EXPECT_GT(scenario_truth(g, og).skew1, 2.0);
}

TEST(BivGamma, SamplerMatchesDensityOnBins) {
  const auto s = TrueScenario::biv_gamma(3.0, 3.6, 0.8, 1.4);
  const std::size_t n = 1'000'000;
  const auto d = sample_biv_gamma(s, n, 10);
  std::vector<double> e1;
  std::vector<double> e2;
  for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    e1.push_back(family_eval(kGamma, s.mean1(), s.sigma, p, FamilyQuantity::quantile));
    e2.push_back(family_eval(kGamma, s.mean2(), s.sigma, p, FamilyQuantity::quantile));
  }
  boost::math::quadrature::gauss<double, 20> rule;
  for (std::size_t i = 0; i + 1 < e1.size(); ++i) {
    for (std::size_t j = 0; j + 1 < e2.size(); ++j) {
      std::size_t count = 0;
      for (std::size_t k = 0; k < n; ++k) {
        count += d.y1[k] > e1[i] && d.y1[k] <= e1[i + 1] && d.y2[k] > e2[j] && d.y2[k] <= e2[j + 1];
      }
      const double prob = rule.integrate(
          [&](double y1) { return rule.integrate([&](double y2) { return biv_gamma_pdf(y1, y2, s); }, e2[j], e2[j + 1]); },
          e1[i], e1[i + 1]);
      const double se = std::sqrt(prob * (1 - prob) / n);
      EXPECT_NEAR(static_cast<double>(count) / n, prob, 5 * se) << i << "," << j;
    }
  }
}

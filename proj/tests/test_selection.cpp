#include <gtest/gtest.h>

#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <numbers>

#include "copreg/selection.hpp"

using namespace copreg;

namespace {

const Parameterization kMarginal{ParamKind::marginal};

}  // namespace

TEST(Edf, ParameterCounts) {
  const auto s = TrueScenario::biv_normal(1, 2, 1, 1.3, 0.5);
  const auto d = sample_scenario(s, 500, 1);
  EXPECT_DOUBLE_EQ(criteria(fit_glm(d, s.family(), s.link(), kMarginal)).edf, 3.0);
  EXPECT_DOUBLE_EQ(criteria(fit_gjrm(d, s.family(), s.family(), s.link(), CopulaFamily::frank, kMarginal)).edf, 5.0);
  EXPECT_DOUBLE_EQ(criteria(fit_gjrm(d, s.family(), s.family(), s.link(), CopulaFamily::student_t, kMarginal)).edf,
                   6.0);
}

TEST(Edf, GlmmRidgeTraceNormalClosedForm) {
  const auto s = TrueScenario::biv_normal(1, 2, 1, 1, 0.6);
  const auto d = sample_scenario(s, 400, 2);
  const FitResult r = fit_glmm(d, s.family(), s.link(), kMarginal);
  ASSERT_FALSE(r.diagnostics.boundary);
  const double sigma = std::exp(r.estimate("log_sigma"));
  const double tau = r.nuisance_value("re_sd");
  const double w = 2.0 / (sigma * sigma);
  const double prior = 1.0 / (tau * tau);
  const double n = static_cast<double>(d.size());
  EXPECT_NEAR(glmm_edf(r), 4.0 + n * w / (w + prior), 1e-8);

  // conditional log likelihood at the posterior modes b_i = sum(y - eta) / sigma^2 / (w + prior)
  double cll = 0.0;
  const double b1 = r.estimate("beta1");
  const double b2 = r.estimate("beta2");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double b = (d.y1[i] - b1 + d.y2[i] - b2) / (sigma * sigma) / (w + prior);
    for (double res : {d.y1[i] - b1 - b, d.y2[i] - b2 - b}) {
      cll += -std::log(sigma) - 0.5 * std::log(2 * std::numbers::pi) - 0.5 * res * res / (sigma * sigma);
    }
  }
  const SelectionRow row = criteria(r);
  ASSERT_TRUE(row.loglik.has_value());
  EXPECT_NEAR(*row.loglik, cll, 1e-6 * std::abs(cll));
  EXPECT_NEAR(*row.bic, -2 * cll + std::log(2 * n) * row.edf, 1e-6 * std::abs(cll));
}

TEST(Edf, GlmmRidgeTraceGammaOracle) {
  const auto s = TrueScenario::biv_gamma(4, 4.8, 0.8, 1.0);
  const auto d = sample_scenario(s, 300, 3);
  const FitResult r = fit_glmm(d, s.family(), s.link(), kMarginal);
  ASSERT_FALSE(r.diagnostics.boundary);
  const double sigma = std::exp(r.estimate("log_sigma"));
  const double a = 1.0 / (sigma * sigma);
  const double tau = r.nuisance_value("re_sd");
  double trace = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e1 = r.estimate("beta1");
    const double e2 = r.estimate("beta2");
    // negative log posterior in b, up to constants
    auto nlp = [&](double b) {
      return a * (e1 + b + d.y1[i] * std::exp(-e1 - b)) + a * (e2 + b + d.y2[i] * std::exp(-e2 - b)) +
             0.5 * b * b / (tau * tau);
    };
    const double b = boost::math::tools::brent_find_minima(nlp, -10.0, 10.0, 52).first;
    const double w = a * (d.y1[i] * std::exp(-e1 - b) + d.y2[i] * std::exp(-e2 - b));
    trace += w / (w + 1.0 / (tau * tau));
  }
  EXPECT_NEAR(glmm_edf(r), 4.0 + trace, 1e-6);
}

TEST(Edf, GlmmBoundaryCollapsesToFixedCount) {
  FitResult r;
  r.model = ModelKind::glmm;
  r.names = {"beta1", "beta2", "log_sigma", "log_re_sd"};
  r.nuisance = {{"re_sd", 1e-5}};
  r.subject_information = {2.0, 3.0};
  r.diagnostics.boundary = true;
  EXPECT_DOUBLE_EQ(glmm_edf(r), 4.0);
  r.diagnostics.boundary = false;
  r.nuisance = {{"re_sd", 1.0}};
  EXPECT_DOUBLE_EQ(glmm_edf(r), 4.0 + 2.0 / 3.0 + 3.0 / 4.0);
  FitResult glm;
  EXPECT_THROW(glmm_edf(glm), DomainError);
}

TEST(Criteria, Formulas) {
  FitResult r;
  r.model = ModelKind::gjrm;
  r.loglik = -1234.5;
  r.edf = 5.0;
  r.n_subjects = 500;
  const SelectionRow row = criteria(r);
  EXPECT_EQ(row.n_obs, 1000u);
  EXPECT_DOUBLE_EQ(*row.aic, 2469.0 + 10.0);
  EXPECT_DOUBLE_EQ(*row.gaic_k, 2469.0 + 20.0);
  EXPECT_DOUBLE_EQ(*row.bic, 2469.0 + std::log(1000.0) * 5.0);
  EXPECT_DOUBLE_EQ(*criteria(r, 2.0).gaic_k, *row.aic);
  // BIC is increasing in edf at fixed loglik
  FitResult bigger = r;
  bigger.edf = 6.0;
  EXPECT_GT(*criteria(bigger).bic, *row.bic);
  EXPECT_EQ(criteria(r, 4.0, 777).n_obs, 777u);
}

TEST(Criteria, AbsentForGee) {
  const auto s = TrueScenario::biv_negbin(1, 2, 1, 1);
  const auto d = sample_scenario(s, 300, 4);
  const SelectionRow row = criteria(fit_gee(d, s.family(), s.link(), kMarginal));
  EXPECT_FALSE(row.loglik.has_value());
  EXPECT_FALSE(row.aic.has_value());
  EXPECT_FALSE(row.gaic_k.has_value());
  EXPECT_FALSE(row.bic.has_value());
}

TEST(Criteria, IndependentCopulaTiesGlmLoglikForFixedTheta) {
  // FGM fixed at theta = 0 is the independence likelihood with a sigma per margin
  const auto s = TrueScenario::biv_gamma(3, 3.6, 0.7, 0.8);
  const auto d = sample_scenario(s, 500, 5);
  GjrmOptions o;
  o.fixed_theta = 0.0;
  const FitResult gj = fit_gjrm(d, s.family(), s.family(), s.link(), CopulaFamily::fgm, kMarginal, o);
  double ll = 0.0;
  for (const auto* y : {&d.y1, &d.y2}) {
    const auto [eta, ls] = marginal_mle(*y, s.family(), s.link());
    for (double v : *y) ll += family_eval(s.family(), s.link().inverse(eta), std::exp(ls), v, FamilyQuantity::logpdf);
  }
  EXPECT_NEAR(*gj.loglik, ll, 1e-6 * std::abs(ll));
}

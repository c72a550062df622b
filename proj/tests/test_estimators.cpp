#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "copreg/detail/family_kernel.hpp"
#include "copreg/detail/objectives.hpp"
#include "copreg/estimators.hpp"
#include "copreg/specfun.hpp"

using namespace copreg;

namespace {

const ResponseFamily kNormal{FamilyKind::normal};
const ResponseFamily kGamma{FamilyKind::gamma};
const ResponseFamily kNegbin{FamilyKind::negbin};
const LinkFunction kIdentity{LinkKind::identity};
const LinkFunction kLog{LinkKind::log};
const Parameterization kMarginal{ParamKind::marginal};
const Parameterization kTimeEffect{ParamKind::time_effect};

double mean(const std::vector<double>& y) { return std::accumulate(y.begin(), y.end(), 0.0) / y.size(); }

double ss(const std::vector<double>& y) {
  const double m = mean(y);
  double s = 0;
  for (double v : y) s += (v - m) * (v - m);
  return s;
}

void expect_valid_result(const FitResult& r) {
  const Eigen::MatrixXd& v = r.vcov;
  ASSERT_EQ(v.rows(), static_cast<Eigen::Index>(r.names.size()));
  EXPECT_LE((v - v.transpose()).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, v.cwiseAbs().maxCoeff()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (v + v.transpose()));
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    EXPECT_NEAR(r.se(r.names[i]), std::sqrt(v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))), 1e-15);
  }
  EXPECT_EQ(r.loglik.has_value(), r.model != ModelKind::gee) << r.model_tag;
  EXPECT_GT(r.wall_ms, 0.0) << r.model_tag;
}

}  // namespace

TEST(Glm, NormalClosedForm) {
  const auto d = sample_scenario(TrueScenario::biv_normal(1, 2, 1.2, 0.8, 0.5), 800, 1);
  const FitResult r = fit_glm(d, kNormal, kIdentity, kMarginal);
  EXPECT_NEAR(r.estimate("beta1"), mean(d.y1), 1e-9);
  EXPECT_NEAR(r.estimate("beta2"), mean(d.y2), 1e-9);
  const double sigma = std::sqrt((ss(d.y1) + ss(d.y2)) / (2.0 * d.size()));
  EXPECT_NEAR(std::exp(r.estimate("log_sigma")), sigma, 1e-8);
  EXPECT_NEAR(r.se("beta1"), sigma / std::sqrt(800.0), 1e-8);
  EXPECT_DOUBLE_EQ(r.edf, 3.0);
  expect_valid_result(r);
}

TEST(Glm, NegbinMeanMatchesSample) {
  const auto d = sample_scenario(TrueScenario::biv_negbin(1.3, 2.2, 1.1, 1.6), 1000, 2);
  const FitResult r = fit_glm(d, kNegbin, kLog, kMarginal);
  EXPECT_NEAR(std::exp(r.estimate("beta1")), mean(d.y1), 1e-6 * mean(d.y1));
  EXPECT_NEAR(std::exp(r.estimate("beta2")), mean(d.y2), 1e-6 * mean(d.y2));
  EXPECT_NEAR(r.mu_hat(1), mean(d.y1), 1e-6 * mean(d.y1));
  expect_valid_result(r);
}

TEST(Gee, PointEstimatesEqualGlm) {
  for (const auto& s : {TrueScenario::biv_gamma(4, 4.8, 0.9, 1.2), TrueScenario::biv_negbin(0.8, 1.9, 2.0, 0.7),
                        TrueScenario::biv_normal(1, 2, 1, 2, 0.6)}) {
    const auto d = sample_scenario(s, 1000, 3);
    const FitResult glm = fit_glm(d, s.family(), s.link(), kMarginal);
    const FitResult gee = fit_gee(d, s.family(), s.link(), kMarginal);
    EXPECT_NEAR(gee.estimate("beta1"), glm.estimate("beta1"), 1e-6) << s.describe();
    EXPECT_NEAR(gee.estimate("beta2"), glm.estimate("beta2"), 1e-6) << s.describe();
    EXPECT_FALSE(gee.loglik.has_value());
    EXPECT_GT(gee.nuisance_value("rho"), 0.0);
    expect_valid_result(gee);
  }
}

TEST(Gee, SandwichShrinksTimeEffectSe) {
  const auto d = sample_scenario(TrueScenario::biv_normal(1, 2, 1, 1, 0.8), 1000, 4);
  const auto glm = extract_time_effect(fit_glm(d, kNormal, kIdentity, kMarginal));
  const auto gee = extract_time_effect(fit_gee(d, kNormal, kIdentity, kMarginal));
  EXPECT_LT(gee.se, glm.se);
  // paired-difference variance: Var(y2 - y1) / n
  std::vector<double> diff(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) diff[i] = d.y2[i] - d.y1[i];
  EXPECT_NEAR(gee.se, std::sqrt(ss(diff) / d.size() / d.size()), 0.05 * gee.se);
}

TEST(Gjrm, NormalGaussianEqualsBivariateNormalMle) {
  const auto d = sample_scenario(TrueScenario::biv_normal(1, 2, 0.7, 1.9, 0.65), 1000, 5);
  const FitResult r = fit_gjrm(d, kNormal, kNormal, kIdentity, CopulaFamily::gaussian, kMarginal);
  const double n = static_cast<double>(d.size());
  const double s1 = std::sqrt(ss(d.y1) / n);
  const double s2 = std::sqrt(ss(d.y2) / n);
  double cross = 0;
  for (std::size_t i = 0; i < d.size(); ++i) cross += (d.y1[i] - mean(d.y1)) * (d.y2[i] - mean(d.y2));
  const double rho = cross / n / (s1 * s2);
  EXPECT_NEAR(r.estimate("beta1"), mean(d.y1), 1e-5);
  EXPECT_NEAR(r.estimate("beta2"), mean(d.y2), 1e-5);
  EXPECT_NEAR(std::exp(r.estimate("log_sigma1")), s1, 1e-5);
  EXPECT_NEAR(std::exp(r.estimate("log_sigma2")), s2, 1e-5);
  EXPECT_NEAR(r.nuisance_value("theta"), rho, 1e-5);
  EXPECT_DOUBLE_EQ(r.edf, 5.0);
  expect_valid_result(r);
}

TEST(Gjrm, FgmFixedAtIndependenceSeparates) {
  for (const auto& s : {TrueScenario::biv_gamma(3, 3.6, 0.8, 0.9), TrueScenario::biv_negbin(1.0, 2.0, 1.5, 1.2)}) {
    const auto d = sample_scenario(s, 600, 6);
    GjrmOptions o;
    o.fixed_theta = 0.0;
    const FitResult r = fit_gjrm(d, s.family(), s.family(), s.link(), CopulaFamily::fgm, kMarginal, o);
    const auto [eta1, ls1] = marginal_mle(d.y1, s.family(), s.link());
    const auto [eta2, ls2] = marginal_mle(d.y2, s.family(), s.link());
    EXPECT_NEAR(r.estimate("beta1"), eta1, 1e-6) << s.describe();
    EXPECT_NEAR(r.estimate("beta2"), eta2, 1e-6) << s.describe();
    EXPECT_NEAR(r.estimate("log_sigma1"), ls1, 1e-6) << s.describe();
    EXPECT_NEAR(r.estimate("log_sigma2"), ls2, 1e-6) << s.describe();
  }
}

TEST(Gjrm, StudentTCarriesSixParameters) {
  const auto d = sample_scenario(TrueScenario::biv_normal(1, 2, 1, 1, 0.5), 400, 7);
  const FitResult r = fit_gjrm(d, kNormal, kNormal, kIdentity, CopulaFamily::student_t, kMarginal);
  EXPECT_DOUBLE_EQ(r.edf, 6.0);
  EXPECT_TRUE(r.has("copula_df_z"));
  EXPECT_GT(r.nuisance_value("df"), 2.0);
  expect_valid_result(r);
}

TEST(TimeEffect, DeltaMethod) {
  FitResult r;
  r.names = {"beta1", "beta2"};
  r.estimates = Eigen::Vector2d(0.7, 0.7);
  r.vcov = Eigen::Matrix2d::Constant(0.04);
  const auto te = extract_time_effect(r);
  EXPECT_DOUBLE_EQ(te.beta_t, 0.0);
  EXPECT_NEAR(te.se, 0.0, 1e-12);
  r.vcov << 0.04, 0.01, 0.01, 0.09;
  r.estimates = Eigen::Vector2d(0.5, 0.9);
  const auto te2 = extract_time_effect(r);
  EXPECT_NEAR(te2.beta_t, 0.4, 1e-15);
  EXPECT_NEAR(te2.se, std::sqrt(0.04 + 0.09 - 0.02), 1e-15);
  FitResult bad;
  bad.names = {"beta1"};
  bad.estimates = Eigen::VectorXd::Constant(1, 0.1);
  bad.vcov = Eigen::MatrixXd::Identity(1, 1);
  EXPECT_THROW(extract_time_effect(bad), DomainError);
}

TEST(TimeEffect, GjrmMarginalAgreesWithGlmTimeEffect) {
  const auto d = sample_scenario(TrueScenario::biv_normal(1, 2, 1.3, 0.6, 0.4), 1000, 8);
  const auto gj = extract_time_effect(fit_gjrm(d, kNormal, kNormal, kIdentity, CopulaFamily::gaussian, kMarginal));
  const FitResult glm_te = fit_glm(d, kNormal, kIdentity, kTimeEffect);
  EXPECT_NEAR(gj.beta_t, glm_te.estimate("beta_t"), 1e-4);
}

TEST(TimeEffect, ReparameterizationIsExact) {
  const auto d = sample_scenario(TrueScenario::biv_gamma(3, 3.6, 0.7, 1.0), 800, 9);
  for (auto fit : {+[](const LongitudinalSample& x, Parameterization p) { return fit_glm(x, kGamma, kLog, p); },
                   +[](const LongitudinalSample& x, Parameterization p) { return fit_gee(x, kGamma, kLog, p); }}) {
    const FitResult m = fit(d, kMarginal);
    const FitResult t = fit(d, kTimeEffect);
    const FitResult mt = reparameterize(m, ParamKind::time_effect);
    EXPECT_NEAR(mt.estimate("beta_t"), t.estimate("beta_t"), 1e-6);
    EXPECT_NEAR(mt.se("beta_t"), t.se("beta_t"), 1e-6);
    const FitResult back = reparameterize(mt, ParamKind::marginal);
    EXPECT_NEAR(back.estimate("beta2"), m.estimate("beta2"), 1e-14);
    EXPECT_NEAR((back.vcov - m.vcov).cwiseAbs().maxCoeff(), 0.0, 1e-14);
    EXPECT_NEAR(extract_time_effect(m).se, mt.se("beta_t"), 1e-12);
  }
}

TEST(Glmm, NormalIdentityRecoversMeans) {
  const auto d = sample_scenario(TrueScenario::biv_normal(1, 2, 1, 1, 0.6), 1000, 10);
  const FitResult r = fit_glmm(d, kNormal, kIdentity, kMarginal);
  EXPECT_NEAR(r.estimate("beta1"), mean(d.y1), 1e-4);
  EXPECT_NEAR(r.estimate("beta2"), mean(d.y2), 1e-4);
  EXPECT_NEAR(r.nuisance_value("re_sd"), std::sqrt(0.6), 0.1);
  expect_valid_result(r);
}

TEST(Glmm, BoundaryReproducesGlm) {
  // independent margins with a negative sample correlation put the RE SD at zero
  for (std::uint64_t seed = 11; seed < 40; ++seed) {
    const auto d = sample_scenario(TrueScenario::biv_gamma(3, 3.6, 0.6, 1e-3), 800, seed);
    double cross = 0;
    for (std::size_t i = 0; i < d.size(); ++i) cross += (d.y1[i] - mean(d.y1)) * (d.y2[i] - mean(d.y2));
    if (cross >= 0) continue;
    const FitResult g = fit_glmm(d, kGamma, kLog, kMarginal);
    const FitResult l = fit_glm(d, kGamma, kLog, kMarginal);
    EXPECT_TRUE(g.diagnostics.boundary);
    EXPECT_NEAR(g.estimate("beta1"), l.estimate("beta1"), 1e-4);
    EXPECT_NEAR(g.estimate("beta2"), l.estimate("beta2"), 1e-4);
    EXPECT_NEAR(g.estimate("log_sigma"), l.estimate("log_sigma"), 1e-4);
    return;
  }
  FAIL() << "no seed with negative sample correlation";
}

TEST(Glmm, QuadratureStability) {
  const auto d = sample_scenario(TrueScenario::biv_gamma(5, 6, 0.8, 1.0), 1000, 12);
  GlmmOptions a;
  GlmmOptions b;
  b.quad_points = 2 * a.quad_points;
  const FitResult ra = fit_glmm(d, kGamma, kLog, kMarginal, a);
  const FitResult rb = fit_glmm(d, kGamma, kLog, kMarginal, b);
  EXPECT_LT((ra.estimates - rb.estimates).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Glmm, TimeVaryingSigma) {
  const auto d = sample_scenario(TrueScenario::biv_negbin(1.0, 3.0, 1.0, 2.0), 800, 13);
  GlmmOptions o;
  o.sigma_time_varying = true;
  const FitResult r = fit_glmm(d, kNegbin, kLog, kMarginal, o);
  EXPECT_TRUE(r.has("log_sigma1"));
  EXPECT_TRUE(r.has("log_sigma2"));
  EXPECT_EQ(r.subject_information.size(), d.size());
  EXPECT_TRUE(r.conditional_loglik.has_value());
}

TEST(Gradient, FamilyKernelScores) {
  for (ResponseFamily f : {kNormal, kGamma, kNegbin}) {
    const LinkFunction link = canonical_link(f);
    for (double y : {0.0, 1.0, 3.0, 11.0}) {
      if (f.kind == FamilyKind::gamma && y == 0.0) continue;
      const double eta = link.kind == LinkKind::log ? 0.8 : 2.1;
      const double ls = std::log(0.7);
      auto ll = [&](double e, double s) {
        const detail::FamilyKernel k(f, link, std::exp(s));
        return k.eval(y, k.cache(y, 0), e, 0).ll;
      };
      const detail::FamilyKernel k(f, link, std::exp(ls));
      const auto t = k.eval(y, k.cache(y, 2), eta, 2);
      const double h = 1e-5;
      const double d1 = (ll(eta + h, ls) - ll(eta - h, ls)) / (2 * h);
      const double ds = (ll(eta, ls + h) - ll(eta, ls - h)) / (2 * h);
      const double d2 = (ll(eta + h, ls) - 2 * ll(eta, ls) + ll(eta - h, ls)) / (h * h);
      const double dss = (ll(eta, ls + h) - 2 * ll(eta, ls) + ll(eta, ls - h)) / (h * h);
      const double des = (ll(eta + h, ls + h) - ll(eta + h, ls - h) - ll(eta - h, ls + h) + ll(eta - h, ls - h)) / (4 * h * h);
      EXPECT_NEAR(t.d1, d1, 1e-5 * std::max(1.0, std::abs(d1))) << to_string(f.kind) << y;
      EXPECT_NEAR(t.ds, ds, 1e-5 * std::max(1.0, std::abs(ds))) << to_string(f.kind) << y;
      EXPECT_NEAR(t.d2, d2, 1e-3 * std::max(1.0, std::abs(d2))) << to_string(f.kind) << y;
      EXPECT_NEAR(t.dss, dss, 1e-3 * std::max(1.0, std::abs(dss))) << to_string(f.kind) << y;
      EXPECT_NEAR(t.des, des, 1e-3 * std::max(1.0, std::abs(des))) << to_string(f.kind) << y;
    }
  }
}

TEST(Gradient, GlmmObjective) {
  for (const auto& s : {TrueScenario::biv_gamma(4, 4.8, 0.8, 1.0), TrueScenario::biv_negbin(1, 2, 1.5, 1.0),
                        TrueScenario::biv_normal(1, 2, 1, 1.5, 0.4)}) {
    const auto d = sample_scenario(s, 300, 14);
    for (bool two : {false, true}) {
      Eigen::VectorXd x(two ? 5 : 4);
      x[0] = s.beta1() + 0.05;
      x[1] = s.beta2() - 0.03;
      x[2] = std::log(s.gamlss_sigma1()) - 0.1;
      if (two) x[3] = std::log(s.gamlss_sigma2()) + 0.1;
      x[x.size() - 1] = std::log(0.5);
      Eigen::VectorXd g;
      detail::glmm_objective(d, s.family(), s.link(), two, 21, x, &g);
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-5;
        Eigen::VectorXd xp = x;
        Eigen::VectorXd xm = x;
        xp[j] += h;
        xm[j] -= h;
        const double fd = (detail::glmm_objective(d, s.family(), s.link(), two, 21, xp, nullptr) -
                           detail::glmm_objective(d, s.family(), s.link(), two, 21, xm, nullptr)) /
                          (2 * h);
        EXPECT_NEAR(g[j], fd, 1e-5 * std::max(1.0, std::abs(fd))) << s.describe() << " j=" << j;
      }
    }
  }
}

TEST(Gradient, GjrmObjective) {
  const struct {
    TrueScenario s;
    CopulaFamily c;
  } cases[] = {{TrueScenario::biv_gamma(4, 4.8, 0.8, 1.0), CopulaFamily::clayton},
               {TrueScenario::biv_negbin(1, 2, 1.5, 1.0), CopulaFamily::gaussian},
               {TrueScenario::biv_normal(1, 2, 1, 1.5, 0.4), CopulaFamily::student_t},
               {TrueScenario::biv_negbin(0.7, 1.4, 1.2, 2.0), CopulaFamily::frank}};
  for (const auto& [s, c] : cases) {
    const auto d = sample_scenario(s, 300, 15);
    Eigen::VectorXd x(c == CopulaFamily::student_t ? 6 : 5);
    x[0] = s.beta1() + 0.05;
    x[1] = s.beta2() - 0.03;
    x[2] = std::log(s.gamlss_sigma1()) - 0.1;
    x[3] = std::log(s.gamlss_sigma2()) + 0.1;
    x[4] = unconstrained(theta_from_tau(c, 0.3));
    if (x.size() == 6) x[5] = unconstrained_df(6.0);
    Eigen::VectorXd g;
    detail::gjrm_objective(d, s.family(), s.family(), s.link(), c, 0, x, &g);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(x[j]));
      Eigen::VectorXd xp = x;
      Eigen::VectorXd xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (detail::gjrm_objective(d, s.family(), s.family(), s.link(), c, 0, xp, nullptr) -
                         detail::gjrm_objective(d, s.family(), s.family(), s.link(), c, 0, xm, nullptr)) /
                        (2 * h);
      EXPECT_NEAR(g[j], fd, 1e-5 * std::max(1.0, std::abs(fd))) << s.describe() << " " << to_string(c) << " j=" << j;
    }
  }
}

TEST(Invariance, LocationShiftOfNormalData) {
  const auto d = sample_scenario(TrueScenario::biv_normal(1, 2, 1, 1.5, 0.5), 800, 16);
  LongitudinalSample shifted = d;
  for (double& v : shifted.y1) v += 3.0;
  for (double& v : shifted.y2) v += 3.0;
  const FitResult a = fit_glm(d, kNormal, kIdentity, kMarginal);
  const FitResult b = fit_glm(shifted, kNormal, kIdentity, kMarginal);
  EXPECT_NEAR(b.estimate("beta1") - a.estimate("beta1"), 3.0, 1e-8);
  EXPECT_NEAR(b.estimate("beta2") - a.estimate("beta2"), 3.0, 1e-8);
  EXPECT_NEAR(b.estimate("log_sigma"), a.estimate("log_sigma"), 1e-8);
  const FitResult ga = fit_gjrm(d, kNormal, kNormal, kIdentity, CopulaFamily::gaussian, kMarginal);
  const FitResult gb = fit_gjrm(shifted, kNormal, kNormal, kIdentity, CopulaFamily::gaussian, kMarginal);
  EXPECT_NEAR(gb.estimate("beta1") - ga.estimate("beta1"), 3.0, 1e-8);
  EXPECT_NEAR(gb.estimate("log_sigma1"), ga.estimate("log_sigma1"), 1e-8);
  EXPECT_NEAR(gb.nuisance_value("theta"), ga.nuisance_value("theta"), 1e-8);
}

TEST(Recovery, GaussianGjrmOnNormalCoverage) {
  // |beta_hat - beta| < 4 SE in at least 95% of 200 replicates
  const auto s = TrueScenario::biv_normal(1, 2, 0.8, 1.6, 0.7);
  int inside = 0;
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    const auto d = sample_scenario(s, 1000, 1000 + rep);
    const FitResult r = fit_gjrm(d, kNormal, kNormal, kIdentity, CopulaFamily::gaussian, kMarginal);
    inside += std::abs(r.estimate("beta1") - s.beta1()) < 4 * r.se("beta1") &&
              std::abs(r.estimate("beta2") - s.beta2()) < 4 * r.se("beta2");
  }
  EXPECT_GE(inside, 190);
}

TEST(Errors, RejectsBadInput) {
  LongitudinalSample d{{1.0}, {2.0}, {}, {}};
  EXPECT_THROW(fit_glm(d, kNormal, kIdentity, kMarginal), DomainError);
  LongitudinalSample neg{{1.0, -1.0, 2.0}, {2.0, 1.0, 3.0}, {}, {}};
  EXPECT_THROW(fit_glm(neg, kGamma, kLog, kMarginal), DomainError);
  EXPECT_THROW(fit_gjrm(neg, kNegbin, kNegbin, kLog, CopulaFamily::clayton, kMarginal), DomainError);
  GlmmOptions few;
  few.quad_points = 3;
  const auto ok = sample_scenario(TrueScenario::biv_normal(1, 2, 1, 1, 0.3), 50, 1);
  EXPECT_THROW(fit_glmm(ok, kNormal, kIdentity, kMarginal, few), DomainError);
}

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "copreg/detail/family_kernel.hpp"
#include "copreg/detail/fit_common.hpp"
#include "copreg/detail/objectives.hpp"
#include "copreg/estimators.hpp"
#include "copreg/specfun.hpp"

namespace copreg {

using detail::FamilyKernel;
using detail::ObsCache;
using detail::ObsTerms;

namespace {

constexpr double kLogReSdMin = -12.0;
constexpr double kLogReSdMax = 5.0;

struct SubjectMode {
  double b{0.0};
  double curvature{1.0};  // -g''(b) at the mode
  double info{0.0};       // data part of the curvature
  double cond_ll{0.0};
};

// Marginal likelihood of the random-intercept model by adaptive Gauss-Hermite.
class GlmmLikelihood {
 public:
  GlmmLikelihood(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, bool two_sigmas,
                 std::size_t quad_points)
      : d_(d), f_(f), link_(link), two_sigmas_(two_sigmas), modes_(d.size()) {
    const QuadratureRule gh = gauss_hermite(quad_points);
    nodes_ = gh.nodes;
    log_w_.resize(gh.size());
    for (std::size_t k = 0; k < gh.size(); ++k) log_w_[k] = std::log(gh.weights[k]) + gh.nodes[k] * gh.nodes[k];
    node_val_.resize(gh.size());
  }

  Eigen::Index n_params() const { return two_sigmas_ ? 5 : 4; }
  Eigen::Index re_index() const { return n_params() - 1; }

  /// Mean negative log likelihood; gradient holds the quadrature nodes fixed.
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const double log_tau = x[re_index()];
    if (!(log_tau >= kLogReSdMin && log_tau <= kLogReSdMax)) return std::numeric_limits<double>::infinity();
    const double s1 = x[2];
    const double s2 = two_sigmas_ ? x[3] : x[2];
    if (std::abs(s1) > 15.0 || std::abs(s2) > 15.0) return std::numeric_limits<double>::infinity();
    const FamilyKernel k1(f_, link_, std::exp(s1));
    const FamilyKernel k2(f_, link_, std::exp(s2));
    const double tau = std::exp(log_tau);
    const double inv_t2 = 1.0 / (tau * tau);
    const double log_norm_re = -log_tau - 0.5 * std::log(2.0 * std::numbers::pi);
    const double eta1 = x[0];
    const double eta2 = x[1];
    const int level = grad ? 1 : 0;

    double total = 0.0;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_params());
    for (std::size_t i = 0; i < d_.size(); ++i) {
      const double y1 = d_.y1[i];
      const double y2 = d_.y2[i];
      const ObsCache c1 = k1.cache(y1, 1);
      const ObsCache c2 = k2.cache(y2, 1);
      SubjectMode& m = modes_[i];
      if (!find_mode(k1, k2, c1, c2, y1, y2, eta1, eta2, inv_t2, m)) return std::numeric_limits<double>::infinity();
      const double sd = 1.0 / std::sqrt(m.curvature);
      const double scale = std::numbers::sqrt2 * sd;
      double vmax = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < nodes_.size(); ++q) {
        const double b = m.b + scale * nodes_[q];
        const double ll = k1.eval(y1, c1, eta1 + b, 0).ll + k2.eval(y2, c2, eta2 + b, 0).ll;
        node_val_[q] = log_w_[q] + ll - 0.5 * b * b * inv_t2;
        vmax = std::max(vmax, node_val_[q]);
      }
      double sum = 0.0;
      for (double v : node_val_) sum += std::exp(v - vmax);
      const double log_li = std::log(scale) + log_norm_re + vmax + std::log(sum);
      if (!std::isfinite(log_li)) return std::numeric_limits<double>::infinity();
      total += log_li;
      if (level >= 1) {
        for (std::size_t q = 0; q < nodes_.size(); ++q) {
          const double pi = std::exp(node_val_[q] - vmax) / sum;
          if (pi < 1e-300) continue;
          const double b = m.b + scale * nodes_[q];
          const ObsTerms t1 = k1.eval(y1, c1, eta1 + b, 1);
          const ObsTerms t2 = k2.eval(y2, c2, eta2 + b, 1);
          g[0] += pi * t1.d1;
          g[1] += pi * t2.d1;
          if (two_sigmas_) {
            g[2] += pi * t1.ds;
            g[3] += pi * t2.ds;
          } else {
            g[2] += pi * (t1.ds + t2.ds);
          }
          g[re_index()] += pi * (b * b * inv_t2 - 1.0);
        }
      }
    }
    const double n = static_cast<double>(d_.size());
    if (grad) *grad = -g / n;
    return -total / n;
  }

  /// Conditional log likelihood and per-subject information at the modes for x.
  void summarize(const Eigen::VectorXd& x, double& cond_ll, std::vector<double>& info) {
    (*this)(x, nullptr);
    cond_ll = 0.0;
    info.resize(d_.size());
    for (std::size_t i = 0; i < d_.size(); ++i) {
      cond_ll += modes_[i].cond_ll;
      info[i] = modes_[i].info;
    }
  }

 private:
  bool find_mode(const FamilyKernel& k1, const FamilyKernel& k2, const ObsCache& c1, const ObsCache& c2, double y1,
                 double y2, double eta1, double eta2, double inv_t2, SubjectMode& m) const {
    double b = std::isfinite(m.b) ? m.b : 0.0;
    auto eval = [&](double bb, double& gval, double& d1, double& d2, double& info, double& cll) {
      const ObsTerms t1 = k1.eval(y1, c1, eta1 + bb, 1);
      const ObsTerms t2 = k2.eval(y2, c2, eta2 + bb, 1);
      cll = t1.ll + t2.ll;
      gval = cll - 0.5 * bb * bb * inv_t2;
      d1 = t1.d1 + t2.d1 - bb * inv_t2;
      info = -(t1.d2 + t2.d2);
      d2 = -info - inv_t2;
    };
    double gv = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double info = 0.0;
    double cll = 0.0;
    eval(b, gv, d1, d2, info, cll);
    for (int it = 0; it < 100; ++it) {
      double step = -d1 / d2;
      step = std::clamp(step, -5.0, 5.0);
      double gv_new = 0.0;
      double d1_new = 0.0;
      double d2_new = 0.0;
      double info_new = 0.0;
      double cll_new = 0.0;
      bool ok = false;
      for (int ls = 0; ls < 60; ++ls) {
        eval(b + step, gv_new, d1_new, d2_new, info_new, cll_new);
        if (std::isfinite(gv_new) && gv_new >= gv - 1e-13 * std::abs(gv)) {
          ok = true;
          break;
        }
        step *= 0.5;
      }
      if (!ok) break;
      b += step;
      gv = gv_new;
      d1 = d1_new;
      d2 = d2_new;
      info = info_new;
      cll = cll_new;
      if (std::abs(step) < 1e-10 * (1.0 + std::abs(b))) break;
    }
    if (!(d2 < 0.0) || !std::isfinite(b)) return false;
    m.b = b;
    m.curvature = -d2;
    m.info = info;
    m.cond_ll = cll;
    return true;
  }

  const LongitudinalSample& d_;
  ResponseFamily f_;
  LinkFunction link_;
  bool two_sigmas_;
  std::vector<double> nodes_;
  std::vector<double> log_w_;
  std::vector<double> node_val_;
  std::vector<SubjectMode> modes_;
};

}  // namespace

FitResult fit_glmm(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, Parameterization p,
                   const GlmmOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  detail::check_fit_input(d, f, link);
  if (opts.quad_points < 5) throw DomainError("fit_glmm: quad_points must be >= 5");
  const std::size_t n = d.size();

  // starting values: marginal MLEs, RE SD at half the between-subject SD of link-scale residuals
  const auto [e1, ls1] = marginal_mle(d.y1, f, link);
  const auto [e2, ls2] = marginal_mle(d.y2, f, link);
  auto link_resid = [&](double y, double eta) {
    if (link.kind == LinkKind::identity) return y - eta;
    return std::log(y + 0.5) - std::log(std::exp(eta) + 0.5);
  };
  std::vector<double> subj(n);
  for (std::size_t i = 0; i < n; ++i) subj[i] = 0.5 * (link_resid(d.y1[i], e1) + link_resid(d.y2[i], e2));
  const double sm = detail::mean_of(subj);
  double sv = 0.0;
  for (double s : subj) sv += (s - sm) * (s - sm);
  const double tau0 = std::max(0.5 * std::sqrt(sv / static_cast<double>(n)), 0.05);

  GlmmLikelihood lik(d, f, link, opts.sigma_time_varying, opts.quad_points);
  Eigen::VectorXd x0(lik.n_params());
  // conditional intercepts sit below the marginal ones under the log link
  const double shift = link.kind == LinkKind::log ? 0.5 * tau0 * tau0 : 0.0;
  x0[0] = e1 - shift;
  x0[1] = e2 - shift;
  if (opts.sigma_time_varying) {
    x0[2] = ls1;
    x0[3] = ls2;
  } else {
    x0[2] = 0.5 * (ls1 + ls2);
  }
  if (f.kind == FamilyKind::normal) {
    // split the total variance between the intercept and the residual
    const double s2 = std::exp(2.0 * x0[2]) - tau0 * tau0;
    if (s2 > 0.0) {
      x0[2] = 0.5 * std::log(s2);
      if (opts.sigma_time_varying) x0[3] = x0[2];
    }
  }
  x0[lik.re_index()] = std::log(tau0);

  Objective obj = [&lik](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return lik(x, g); };
  OptimOptions oo = opts.optim;
  const OptimResult opt = bfgs_minimize(obj, x0, oo);

  FitResult r;
  r.model_tag = "glmm";
  r.model = ModelKind::glmm;
  r.param = {ParamKind::marginal};
  r.family = f;
  r.link = link;
  r.n_subjects = n;
  if (opts.sigma_time_varying) {
    r.names = {"beta1", "beta2", "log_sigma1", "log_sigma2", "log_re_sd"};
  } else {
    r.names = {"beta1", "beta2", "log_sigma", "log_re_sd"};
  }
  r.estimates = opt.x;
  const double nd = static_cast<double>(n);
  bool repaired = false;
  try {
    const Eigen::MatrixXd h = fd_hessian(obj, opt.x) * nd;
    r.vcov = inverse_psd(h, &repaired);
  } catch (const DomainError&) {
    r.vcov = Eigen::MatrixXd::Constant(opt.x.size(), opt.x.size(), std::numeric_limits<double>::quiet_NaN());
    repaired = true;
  }
  r.diagnostics.hessian_repaired = repaired;
  r.loglik = -opt.f * nd;
  double cond_ll = 0.0;
  lik.summarize(opt.x, cond_ll, r.subject_information);
  r.conditional_loglik = cond_ll;
  const double tau = std::exp(opt.x[lik.re_index()]);
  r.diagnostics.boundary = tau < 1e-3;
  double trace = 0.0;
  if (!r.diagnostics.boundary) {
    for (double w : r.subject_information) trace += w / (w + 1.0 / (tau * tau));
  }
  r.edf = static_cast<double>(lik.n_params()) + trace;
  r.nuisance = {{"re_sd", tau}, {"sigma", std::exp(opt.x[2])}};
  r.converged = opt.converged;
  r.iterations = opt.iterations;
  r.diagnostics.restarts_used = opt.restarts_used;
  r.diagnostics.message = opt.message;
  detail::finish_param(r, p);
  r.wall_ms = detail::elapsed_ms(start);
  return r;
}

double detail::glmm_objective(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, bool two_sigmas,
                              std::size_t quad_points, const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
  GlmmLikelihood lik(d, f, link, two_sigmas, quad_points);
  return lik(x, grad);
}

}  // namespace copreg

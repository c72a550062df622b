#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "copreg/detail/fit_common.hpp"
#include "copreg/detail/objectives.hpp"
#include "copreg/estimators.hpp"
#include "copreg/specfun.hpp"

namespace copreg {

namespace {

constexpr double kProbFloor = 1e-300;

int swapped_rotation(int rot) { return rot == 90 ? 270 : (rot == 270 ? 90 : rot); }

// dC(u, v)/dv, i.e. the conditional cdf of U given V = v.
double hfunc_v(const CopulaModel& c, double u, double v) {
  CopulaModel s = c;
  s.rotation = swapped_rotation(c.rotation);
  return copula_hfunc(s, v, u);
}

/// Joint log likelihood of two margins linked by a copula.
///
/// Continuous pairs contribute log f1 + log f2 + log c(F1, F2); two discrete
/// margins use the rectangle probability of the copula cdf; one discrete
/// margin uses the h-function difference times the continuous density.
class GjrmLikelihood {
 public:
  GjrmLikelihood(const LongitudinalSample& d, ResponseFamily f1, ResponseFamily f2, LinkFunction link,
                 CopulaFamily fam, int rotation, std::optional<double> fixed_z)
      : f1_(f1), f2_(f2), link_(link), fam_(fam), rotation_(rotation), fixed_z_(fixed_z) {
    // collapse repeated pairs; counts act as weights
    std::map<std::pair<double, double>, std::size_t> index;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto key = std::make_pair(d.y1[i], d.y2[i]);
      const auto [it, inserted] = index.try_emplace(key, y1_.size());
      if (inserted) {
        y1_.push_back(d.y1[i]);
        y2_.push_back(d.y2[i]);
        w_.push_back(1.0);
      } else {
        w_[it->second] += 1.0;
      }
    }
    n_total_ = static_cast<double>(d.size());
    if (f1.discrete()) max1_ = static_cast<std::size_t>(*std::max_element(y1_.begin(), y1_.end()));
    if (f2.discrete()) max2_ = static_cast<std::size_t>(*std::max_element(y2_.begin(), y2_.end()));
    const std::size_t m = y1_.size();
    m1_.resize(m);
    m2_.resize(m);
    n_dep_ = fixed_z ? 0 : (fam == CopulaFamily::student_t ? 2 : 1);
  }

  Eigen::Index n_params() const { return 4 + n_dep_; }
  std::size_t units() const { return y1_.size(); }
  double weight(std::size_t k) const { return w_[k]; }
  double n_total() const { return n_total_; }

  CopulaModel copula_at(const Eigen::VectorXd& x) const {
    const double z = fixed_z_ ? *fixed_z_ : x[4];
    CopulaModel c = from_unconstrained(fam_, z);
    c.rotation = rotation_;
    if (fam_ == CopulaFamily::student_t) c.df = n_dep_ == 2 ? df_from_unconstrained(x[5]) : 8.0;
    return c;
  }

  /// Per-unit log likelihood contributions into out; returns the weighted total.
  double contributions(const Eigen::VectorXd& x, std::vector<double>& out, std::size_t* clipped = nullptr,
                       std::size_t* clamped = nullptr) {
    if (!x.allFinite() || std::abs(x[2]) > 15.0 || std::abs(x[3]) > 15.0) return -std::numeric_limits<double>::infinity();
    fill_margin(1, x[0], std::exp(x[2]), m1_);
    fill_margin(2, x[1], std::exp(x[3]), m2_);
    const CopulaModel c = copula_at(x);
    return combine(c, out, clipped, clamped);
  }

  /// Mean negative log likelihood with a block finite-difference gradient:
  /// perturbing one margin only recomputes that margin and the copula term.
  /// Optionally returns per-unit scores (rows) for outer-product curvature.
  double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* scores = nullptr) {
    std::vector<double> base(units());
    const double total = contributions(x, base);
    if (!std::isfinite(total)) return std::numeric_limits<double>::infinity();
    if (!grad) return -total / n_total_;
    const Eigen::Index np = n_params();
    grad->resize(np);
    if (scores) scores->resize(static_cast<Eigen::Index>(units()), np);
    const std::vector<Margin> keep1 = m1_;
    const std::vector<Margin> keep2 = m2_;
    std::vector<double> up(units());
    std::vector<double> dn(units());
    for (Eigen::Index j = 0; j < np; ++j) {
      const double h = 6e-6 * std::max(1.0, std::abs(x[j]));
      Eigen::VectorXd xp = x;
      Eigen::VectorXd xm = x;
      xp[j] += h;
      xm[j] -= h;
      double tp = 0.0;
      double tm = 0.0;
      if (j == 0 || j == 2) {
        fill_margin(1, xp[0], std::exp(xp[2]), m1_);
        tp = combine(copula_at(xp), up);
        fill_margin(1, xm[0], std::exp(xm[2]), m1_);
        tm = combine(copula_at(xm), dn);
        m1_ = keep1;
      } else if (j == 1 || j == 3) {
        fill_margin(2, xp[1], std::exp(xp[3]), m2_);
        tp = combine(copula_at(xp), up);
        fill_margin(2, xm[1], std::exp(xm[3]), m2_);
        tm = combine(copula_at(xm), dn);
        m2_ = keep2;
      } else {
        tp = combine(copula_at(xp), up);
        tm = combine(copula_at(xm), dn);
      }
      if (!std::isfinite(tp) || !std::isfinite(tm)) return std::numeric_limits<double>::infinity();
      (*grad)[j] = -(tp - tm) / (2.0 * h) / n_total_;
      if (scores) {
        for (std::size_t k = 0; k < units(); ++k) (*scores)(static_cast<Eigen::Index>(k), j) = (up[k] - dn[k]) / (2.0 * h);
      }
    }
    return -total / n_total_;
  }

 private:
  struct Margin {
    double logf{0.0};  // log density (continuous) or unused
    double u{0.0};     // F(y)
    double u_minus{0.0};  // F(y - 1) for discrete margins
  };

  void fill_margin(int t, double eta, double sigma, std::vector<Margin>& out) const {
    const ResponseFamily f = t == 1 ? f1_ : f2_;
    const std::vector<double>& y = t == 1 ? y1_ : y2_;
    const double mu = link_.inverse(eta);
    if (f.discrete()) {
      const CountTable tab = negbin_table(mu, sigma, t == 1 ? max1_ : max2_);
      for (std::size_t k = 0; k < y.size(); ++k) {
        const auto c = static_cast<std::size_t>(y[k]);
        out[k].logf = tab.logpmf[c];
        out[k].u = tab.cdf[c];
        out[k].u_minus = c == 0 ? 0.0 : tab.cdf[c - 1];
      }
      return;
    }
    const Marginal m(f, mu, sigma);
    for (std::size_t k = 0; k < y.size(); ++k) {
      out[k].logf = m.logpdf(y[k]);
      out[k].u = m.cdf(y[k]);
    }
  }

  static double cdf_or_zero(const CopulaModel& c, double u, double v, std::size_t& clipped) {
    if (u <= 0.0 || v <= 0.0) return 0.0;
    if (clip_unit(u)) ++clipped;
    if (clip_unit(v)) ++clipped;
    return copula_cdf(c, u, v);
  }

  double combine(const CopulaModel& c, std::vector<double>& out, std::size_t* clipped_out = nullptr,
                 std::size_t* clamped_out = nullptr) const {
    std::size_t clipped = 0;
    std::size_t clamped = 0;
    double total = 0.0;
    const bool d1 = f1_.discrete();
    const bool d2 = f2_.discrete();
    try {
      for (std::size_t k = 0; k < y1_.size(); ++k) {
        const Margin& a = m1_[k];
        const Margin& b = m2_[k];
        double ll = 0.0;
        if (!d1 && !d2) {
          double u = a.u;
          double v = b.u;
          if (clip_unit(u)) ++clipped;
          if (clip_unit(v)) ++clipped;
          bool cl = false;
          ll = a.logf + b.logf + copula_logdensity(c, u, v, &cl);
          if (cl) ++clamped;
        } else if (d1 && d2) {
          const double p = cdf_or_zero(c, a.u, b.u, clipped) - cdf_or_zero(c, a.u_minus, b.u, clipped) -
                           cdf_or_zero(c, a.u, b.u_minus, clipped) + cdf_or_zero(c, a.u_minus, b.u_minus, clipped);
          if (!(p > kProbFloor)) ++clamped;
          ll = std::log(std::max(p, kProbFloor));
        } else {
          // one discrete margin: f_cont(y) [dC/dv_cont at F_disc(y) - at F_disc(y - 1)]
          const Margin& disc = d1 ? a : b;
          const Margin& cont = d1 ? b : a;
          double v = cont.u;
          if (clip_unit(v)) ++clipped;
          auto cond = [&](double u) {
            if (u <= 0.0) return 0.0;
            if (clip_unit(u)) ++clipped;
            return d1 ? hfunc_v(c, u, v) : copula_hfunc(c, v, u);
          };
          const double p = cond(disc.u) - cond(disc.u_minus);
          if (!(p > kProbFloor)) ++clamped;
          ll = cont.logf + std::log(std::max(p, kProbFloor));
        }
        out[k] = ll;
        total += w_[k] * ll;
      }
    } catch (const DomainError&) {
      return -std::numeric_limits<double>::infinity();
    }
    if (clipped_out) *clipped_out = clipped;
    if (clamped_out) *clamped_out = clamped;
    return total;
  }

  ResponseFamily f1_;
  ResponseFamily f2_;
  LinkFunction link_;
  CopulaFamily fam_;
  int rotation_;
  std::optional<double> fixed_z_;
  int n_dep_{1};
  std::vector<double> y1_;
  std::vector<double> y2_;
  std::vector<double> w_;
  double n_total_{0.0};
  std::size_t max1_{0};
  std::size_t max2_{0};
  std::vector<Margin> m1_;
  std::vector<Margin> m2_;
};

double starting_z(CopulaFamily fam, int rotation, double tau_hat, double df) {
  double tau = (rotation == 90 || rotation == 270) ? -tau_hat : tau_hat;
  auto [lo, hi] = tau_range(fam);
  const double pad = 0.02 * (hi - lo);
  tau = std::clamp(tau, lo + pad, hi - pad);
  return unconstrained(theta_from_tau(fam, tau, df));
}

}  // namespace

FitResult fit_gjrm(const LongitudinalSample& d, ResponseFamily f1, ResponseFamily f2, LinkFunction link,
                   CopulaFamily copula, Parameterization p, const GjrmOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  if (f1 == f2) {
    validate_for_family(d, f1);
  } else {
    // 1.0 is admissible for every family, so each check reports only its own time point
    const std::vector<double> ones(d.size(), 1.0);
    validate_for_family({d.y1, ones, d.line1, {}}, f1);
    validate_for_family({ones, d.y2, {}, d.line2}, f2);
  }
  for (ResponseFamily f : {f1, f2}) {
    if (f.kind != FamilyKind::normal && link.kind != LinkKind::log) {
      throw DomainError(std::string(to_string(f.kind)) + " margins require the log link");
    }
  }
  CopulaModel probe{copula, copula == CopulaFamily::gumbel || copula == CopulaFamily::hougaard ||
                                    copula == CopulaFamily::joe || copula == CopulaFamily::clayton ||
                                    copula == CopulaFamily::plackett
                                ? 1.5
                                : 0.3,
                    opts.df_start, opts.rotation};
  validate(probe);

  const auto [e1, ls1] = marginal_mle(d.y1, f1, link);
  const auto [e2, ls2] = marginal_mle(d.y2, f2, link);
  std::optional<double> fixed_z;
  if (opts.fixed_theta) {
    CopulaModel fixed{copula, *opts.fixed_theta, opts.df_start, opts.rotation};
    fixed_z = unconstrained(fixed);
  }
  GjrmLikelihood lik(d, f1, f2, link, copula, opts.rotation, fixed_z);
  Eigen::VectorXd x0(lik.n_params());
  x0 << e1, e2, ls1, ls2, Eigen::VectorXd::Zero(lik.n_params() - 4);
  if (!fixed_z) x0[4] = starting_z(copula, opts.rotation, kendall_tau(d.y1, d.y2), opts.df_start);
  if (copula == CopulaFamily::student_t && !fixed_z) x0[5] = unconstrained_df(opts.df_start);

  Objective obj = [&lik](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return lik.value_grad(x, g); };

  // outer-product curvature at the start seeds the quasi-Newton inverse Hessian
  Eigen::MatrixXd scores;
  Eigen::VectorXd g0;
  Eigen::MatrixXd h0;
  const Eigen::MatrixXd* h0_ptr = nullptr;
  if (std::isfinite(lik.value_grad(x0, &g0, &scores))) {
    Eigen::MatrixXd bhhh = Eigen::MatrixXd::Zero(x0.size(), x0.size());
    for (Eigen::Index k = 0; k < scores.rows(); ++k) {
      bhhh.noalias() += lik.weight(static_cast<std::size_t>(k)) * scores.row(k).transpose() * scores.row(k);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(bhhh / lik.n_total());
    if (llt.info() == Eigen::Success) {
      h0 = llt.solve(Eigen::MatrixXd::Identity(x0.size(), x0.size()));
      h0_ptr = &h0;
    }
  }
  OptimOptions oo = opts.optim;
  oo.value_only_line_search = true;
  const OptimResult opt = bfgs_minimize(obj, x0, oo, h0_ptr);

  FitResult r;
  r.model_tag = "gjrm-" + std::string(to_string(copula));
  if (opts.rotation != 0) r.model_tag += "-r" + std::to_string(opts.rotation);
  r.model = ModelKind::gjrm;
  r.param = {ParamKind::marginal};
  r.family = f1;
  r.link = link;
  r.n_subjects = d.size();
  r.names = {"beta1", "beta2", "log_sigma1", "log_sigma2"};
  if (!fixed_z) r.names.emplace_back("copula_z");
  if (copula == CopulaFamily::student_t && !fixed_z) r.names.emplace_back("copula_df_z");
  r.estimates = opt.x;

  bool repaired = false;
  try {
    auto value = [&lik](const Eigen::VectorXd& x) { return lik.value_grad(x, nullptr); };
    const Eigen::MatrixXd h = fd_hessian_values(value, opt.x) * lik.n_total();
    r.vcov = inverse_psd(h, &repaired);
  } catch (const DomainError&) {
    r.vcov = Eigen::MatrixXd::Constant(opt.x.size(), opt.x.size(), std::numeric_limits<double>::quiet_NaN());
    repaired = true;
  }
  r.diagnostics.hessian_repaired = repaired;

  std::vector<double> contrib(lik.units());
  std::size_t clipped = 0;
  std::size_t clamped = 0;
  r.loglik = lik.contributions(opt.x, contrib, &clipped, &clamped);
  r.diagnostics.clipped_points = clipped;
  r.diagnostics.clamped_densities = clamped;
  const CopulaModel cm = lik.copula_at(opt.x);
  r.copula = cm;
  r.nuisance = {{"theta", cm.theta}, {"tau", tau_from_theta(cm)}};
  if (copula == CopulaFamily::student_t) r.nuisance.emplace_back("df", cm.df);
  r.edf = static_cast<double>(lik.n_params());
  r.converged = opt.converged;
  r.iterations = opt.iterations;
  r.diagnostics.restarts_used = opt.restarts_used;
  r.diagnostics.message = opt.message;
  detail::finish_param(r, p);
  r.wall_ms = detail::elapsed_ms(start);
  return r;
}

double detail::gjrm_objective(const LongitudinalSample& d, ResponseFamily f1, ResponseFamily f2, LinkFunction link,
                              CopulaFamily copula, int rotation, const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
  GjrmLikelihood lik(d, f1, f2, link, copula, rotation, std::nullopt);
  return lik.value_grad(x, grad);
}

}  // namespace copreg

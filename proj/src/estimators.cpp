#include "copreg/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "copreg/detail/family_kernel.hpp"
#include "copreg/detail/fit_common.hpp"

namespace copreg {

using detail::FamilyKernel;
using detail::ObsCache;
using detail::ObsTerms;

std::string_view to_string(ParamKind kind) { return kind == ParamKind::marginal ? "marginal" : "time_effect"; }

ParamKind parse_param_kind(std::string_view name) {
  if (name == "marginal") return ParamKind::marginal;
  if (name == "time-effect" || name == "time_effect") return ParamKind::time_effect;
  throw ParseError("unknown parameterization '" + std::string(name) + "' (expected marginal|time-effect)");
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::glm: return "glm";
    case ModelKind::gee: return "gee";
    case ModelKind::glmm: return "glmm";
    case ModelKind::gjrm: return "gjrm";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// FitResult accessors

bool FitResult::has(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::size_t FitResult::index(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DomainError("FitResult: no parameter named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names.begin());
}

double FitResult::estimate(std::string_view name) const { return estimates[static_cast<Eigen::Index>(index(name))]; }

double FitResult::se(std::string_view name) const {
  const auto i = static_cast<Eigen::Index>(index(name));
  return std::sqrt(std::max(0.0, vcov(i, i)));
}

Eigen::VectorXd FitResult::se() const { return vcov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

double FitResult::nuisance_value(std::string_view name) const {
  for (const auto& [k, v] : nuisance) {
    if (k == name) return v;
  }
  throw DomainError("FitResult: no nuisance value named '" + std::string(name) + "'");
}

double FitResult::mu_hat(int t) const {
  if (t != 1 && t != 2) throw DomainError("mu_hat: t must be 1 or 2");
  const double b1 = estimate("beta1");
  if (t == 1) return link.inverse(b1);
  if (param.kind == ParamKind::marginal) return link.inverse(estimate("beta2"));
  return link.inverse(b1 + estimate("beta_t"));
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace detail {

void check_fit_input(const LongitudinalSample& d, ResponseFamily f, LinkFunction link) {
  validate_for_family(d, f);
  if (f.kind != FamilyKind::normal && link.kind != LinkKind::log) {
    throw DomainError(std::string(to_string(f.kind)) + " margins require the log link");
  }
  for (int t = 1; t <= 2; ++t) {
    const auto& y = t == 1 ? d.y1 : d.y2;
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    if (*lo == *hi) {
      throw DomainError("degenerate response: all values at time " + std::to_string(t) + " equal " +
                        std::to_string(*lo));
    }
  }
}

double mean_of(std::span<const double> y) { return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size()); }

namespace {

double moment_log_sigma(double m, double v, ResponseFamily f) {
  switch (f.kind) {
    case FamilyKind::normal: return 0.5 * std::log(v);
    case FamilyKind::gamma: return 0.5 * std::log(v / (m * m));
    case FamilyKind::negbin: return std::log(std::max((v - m) / (m * m), 1e-3));
  }
  return 0.0;
}

}  // namespace

double moment_log_sigma(std::span<const double> y, ResponseFamily f) {
  const double m = mean_of(y);
  double v = 0.0;
  for (double x : y) v += (x - m) * (x - m);
  return moment_log_sigma(m, v / static_cast<double>(y.size()), f);
}

double pooled_moment_log_sigma(const LongitudinalSample& d, ResponseFamily f) {
  const double m = 0.5 * (mean_of(d.y1) + mean_of(d.y2));
  double v = 0.0;
  for (const auto* y : {&d.y1, &d.y2}) {
    for (double x : *y) v += (x - m) * (x - m);
  }
  return moment_log_sigma(m, v / static_cast<double>(2 * d.size()), f);
}

namespace {

ObsCache weighted_cache(const FamilyKernel& k, ResponseFamily f, const WeightedResponse& e, int level) {
  if (f.kind == FamilyKind::gamma) return ObsCache{e.log_y, 0.0, 0.0};
  return k.cache(e.y, level);
}

}  // namespace

std::vector<WeightedResponse> compress_responses(std::span<const double> y, ResponseFamily f) {
  std::vector<WeightedResponse> out;
  const double n = static_cast<double>(y.size());
  switch (f.kind) {
    case FamilyKind::gamma: {
      double sl = 0.0;
      for (double v : y) sl += std::log(v);
      out.push_back({mean_of(y), sl / n, n});
      break;
    }
    case FamilyKind::negbin: {
      const double top = *std::max_element(y.begin(), y.end());
      if (top <= 2.0 * n + 1000.0) {
        std::vector<std::size_t> hist(static_cast<std::size_t>(top) + 1, 0);
        for (double v : y) ++hist[static_cast<std::size_t>(v)];
        for (std::size_t c = 0; c < hist.size(); ++c) {
          if (hist[c] > 0) out.push_back({static_cast<double>(c), 0.0, static_cast<double>(hist[c])});
        }
      } else {
        std::vector<double> sorted(y.begin(), y.end());
        std::sort(sorted.begin(), sorted.end());
        for (double v : sorted) {
          if (!out.empty() && out.back().y == v) {
            out.back().w += 1.0;
          } else {
            out.push_back({v, 0.0, 1.0});
          }
        }
      }
      break;
    }
    case FamilyKind::normal:
      out.reserve(y.size());
      for (double v : y) out.push_back({v, 0.0, 1.0});
      break;
  }
  return out;
}

LogSigmaFit maximize_log_sigma(const std::vector<std::pair<std::span<const double>, double>>& groups, ResponseFamily f,
                               LinkFunction link, double s0) {
  std::vector<std::pair<std::vector<WeightedResponse>, double>> compressed;
  for (const auto& [y, eta] : groups) compressed.emplace_back(compress_responses(y, f), eta);
  return maximize_log_sigma(compressed, f, link, s0);
}

LogSigmaFit maximize_log_sigma(const std::vector<std::pair<std::vector<WeightedResponse>, double>>& compressed,
                               ResponseFamily f, LinkFunction link, double s0) {
  // (responses, eta) groups sharing one sigma
  constexpr double kLo = -12.0;
  constexpr double kHi = 6.0;
  auto profile = [&](double s, int level, double* grad, double* hess) {
    const FamilyKernel k(f, link, std::exp(s));
    double ll = 0.0;
    double g = 0.0;
    double h = 0.0;
    for (const auto& [ys, eta] : compressed) {
      for (const WeightedResponse& e : ys) {
        const ObsTerms t = k.eval(e.y, weighted_cache(k, f, e, level), eta, level);
        ll += e.w * t.ll;
        g += e.w * t.ds;
        h += e.w * t.dss;
      }
    }
    if (grad) *grad = g;
    if (hess) *hess = h;
    return ll;
  };
  LogSigmaFit out;
  double s = std::clamp(s0, kLo, kHi);
  double g = 0.0;
  double h = 0.0;
  double ll = profile(s, 2, &g, &h);
  for (out.iterations = 0; out.iterations < 100; ++out.iterations) {
    if (std::abs(g) <= 1e-10 * std::max(1.0, std::abs(ll))) {
      out.converged = true;
      break;
    }
    double step = h < 0.0 ? -g / h : (g > 0.0 ? 1.0 : -1.0);
    step = std::clamp(step, -2.0, 2.0);
    bool moved = false;
    for (int ls = 0; ls < 50; ++ls) {
      const double s_new = std::clamp(s + step, kLo, kHi);
      double g_new = 0.0;
      double h_new = 0.0;
      const double ll_new = profile(s_new, 2, &g_new, &h_new);
      if (std::isfinite(ll_new) && ll_new >= ll - 1e-12 * std::abs(ll)) {
        moved = s_new != s;
        s = s_new;
        ll = ll_new;
        g = g_new;
        h = h_new;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      // pinned at a bound or no further progress
      out.converged = std::abs(g) <= 1e-6 * std::max(1.0, std::abs(ll));
      break;
    }
  }
  out.log_sigma = s;
  out.loglik = ll;
  out.boundary = s <= kLo + 1e-9 || s >= kHi - 1e-9;
  if (out.boundary) out.converged = true;
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  const auto d = std::chrono::steady_clock::now() - start;
  return std::max(1e-6, std::chrono::duration<double, std::milli>(d).count());
}

void finish_param(FitResult& r, Parameterization p) {
  if (p.kind == ParamKind::time_effect) r = reparameterize(r, ParamKind::time_effect);
}

}  // namespace detail

std::pair<double, double> marginal_mle(std::span<const double> y, ResponseFamily f, LinkFunction link) {
  const double m = detail::mean_of(y);
  if (link.kind == LinkKind::log && !(m > 0.0)) throw DomainError("marginal_mle: mean must be > 0 for the log link");
  const double eta = link.link(m);
  if (f.kind == FamilyKind::normal) return {eta, detail::moment_log_sigma(y, f)};
  const auto fit = detail::maximize_log_sigma({{y, eta}}, f, link, detail::moment_log_sigma(y, f));
  return {eta, fit.log_sigma};
}

// ---------------------------------------------------------------------------
// GLM

FitResult fit_glm(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, Parameterization p,
                  const FitOptions&) {
  const auto start = std::chrono::steady_clock::now();
  detail::check_fit_input(d, f, link);
  const double n = static_cast<double>(d.size());
  FitResult r;
  r.model_tag = "glm";
  r.model = ModelKind::glm;
  r.param = {ParamKind::marginal};
  r.family = f;
  r.link = link;
  r.n_subjects = d.size();

  // Saturated time indicators: the mean score vanishes at the per-time sample means.
  const double eta1 = link.link(detail::mean_of(d.y1));
  const double eta2 = link.link(detail::mean_of(d.y2));
  double s = 0.0;
  double ll = 0.0;
  int iters = 1;
  std::vector<std::pair<std::vector<detail::WeightedResponse>, double>> compressed;
  if (f.kind == FamilyKind::normal) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      ss += (d.y1[i] - eta1) * (d.y1[i] - eta1) + (d.y2[i] - eta2) * (d.y2[i] - eta2);
    }
    s = 0.5 * std::log(ss / (2.0 * n));
    r.converged = true;
  } else {
    compressed = {{detail::compress_responses(d.y1, f), eta1}, {detail::compress_responses(d.y2, f), eta2}};
    const auto sf = detail::maximize_log_sigma(compressed, f, link, detail::pooled_moment_log_sigma(d, f));
    s = sf.log_sigma;
    iters = sf.iterations;
    r.converged = sf.converged;
    r.diagnostics.boundary = sf.boundary;
  }

  // observed information
  const FamilyKernel k(f, link, std::exp(s));
  Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
  for (int t = 0; t < 2; ++t) {
    const auto& y = t == 0 ? d.y1 : d.y2;
    const double eta = t == 0 ? eta1 : eta2;
    const auto ys = f.kind == FamilyKind::normal ? detail::compress_responses(y, f) : compressed[t].first;
    for (const detail::WeightedResponse& e : ys) {
      const ObsTerms o = k.eval(e.y, detail::weighted_cache(k, f, e, 2), eta, 2);
      ll += e.w * o.ll;
      info(t, t) -= e.w * o.d2;
      info(t, 2) -= e.w * o.des;
      info(2, 2) -= e.w * o.dss;
    }
  }
  info(2, 0) = info(0, 2);
  info(2, 1) = info(1, 2);
  bool repaired = false;
  r.names = {"beta1", "beta2", "log_sigma"};
  r.estimates = Eigen::Vector3d(eta1, eta2, s);
  r.vcov = inverse_psd(info, &repaired);
  r.diagnostics.hessian_repaired = repaired;
  r.loglik = ll;
  r.edf = 3.0;
  r.iterations = iters;
  r.nuisance = {{"sigma", std::exp(s)}};
  detail::finish_param(r, p);
  r.wall_ms = detail::elapsed_ms(start);
  return r;
}

// ---------------------------------------------------------------------------
// GEE

FitResult fit_gee(const LongitudinalSample& d, ResponseFamily f, LinkFunction link, Parameterization p,
                  const FitOptions&) {
  const auto start = std::chrono::steady_clock::now();
  detail::check_fit_input(d, f, link);
  const std::size_t n = d.size();
  const double nd = static_cast<double>(n);
  FitResult r;
  r.model_tag = "gee";
  r.model = ModelKind::gee;
  r.param = {ParamKind::marginal};
  r.family = f;
  r.link = link;
  r.n_subjects = n;

  // independence (GLM) start
  Eigen::Vector2d beta(link.link(detail::mean_of(d.y1)), link.link(detail::mean_of(d.y2)));

  double phi = 1.0;
  double rho = 0.0;
  double sigma_nb = 1.0;
  Eigen::Matrix2d vinv;
  Eigen::Vector2d mu;
  Eigen::Vector2d dmu;
  Eigen::Vector2d vfun;
  auto update_moments = [&]() {
    for (int t = 0; t < 2; ++t) {
      mu[t] = link.inverse(beta[t]);
      dmu[t] = link.mu_eta(beta[t]);
    }
    if (f.kind == FamilyKind::negbin) {
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (int t = 0; t < 2; ++t) {
          const double y = t == 0 ? d.y1[i] : d.y2[i];
          num += (y - mu[t]) * (y - mu[t]) - mu[t];
          den += mu[t] * mu[t];
        }
      }
      sigma_nb = std::max(num / den, 1e-8);
    }
    for (int t = 0; t < 2; ++t) {
      switch (f.kind) {
        case FamilyKind::normal: vfun[t] = 1.0; break;
        case FamilyKind::gamma: vfun[t] = mu[t] * mu[t]; break;
        case FamilyKind::negbin: vfun[t] = mu[t] + sigma_nb * mu[t] * mu[t]; break;
      }
    }
    double s2 = 0.0;
    double s12 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e1 = (d.y1[i] - mu[0]) / std::sqrt(vfun[0]);
      const double e2 = (d.y2[i] - mu[1]) / std::sqrt(vfun[1]);
      s2 += e1 * e1 + e2 * e2;
      s12 += e1 * e2;
    }
    phi = f.kind == FamilyKind::negbin ? 1.0 : s2 / (2.0 * nd - 2.0);
    rho = s12 / ((nd - 2.0) * phi);
    if (!(std::abs(rho) < 1.0)) throw DomainError("fit_gee: working correlation estimate |rho| >= 1");
    Eigen::Matrix2d v;
    const double a0 = std::sqrt(vfun[0]);
    const double a1 = std::sqrt(vfun[1]);
    v << phi * vfun[0], phi * rho * a0 * a1, phi * rho * a0 * a1, phi * vfun[1];
    vinv = v.inverse();
  };

  int iter = 0;
  bool converged = false;
  for (; iter < 100; ++iter) {
    update_moments();
    const Eigen::Matrix2d dm = dmu.asDiagonal();
    const Eigen::Matrix2d dv = dm * vinv;
    Eigen::Vector2d score = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d res(d.y1[i] - mu[0], d.y2[i] - mu[1]);
      score.noalias() += dv * res;
    }
    const Eigen::Matrix2d info = nd * dv * dm;
    const Eigen::Vector2d step = info.ldlt().solve(score);
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) {
      converged = true;
      ++iter;
      break;
    }
  }
  update_moments();

  // sandwich A^-1 B A^-1
  const Eigen::Matrix2d dm = dmu.asDiagonal();
  const Eigen::Matrix2d dv = dm * vinv;
  const Eigen::Matrix2d a = nd * dv * dm;
  Eigen::Matrix2d b = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d u = dv * Eigen::Vector2d(d.y1[i] - mu[0], d.y2[i] - mu[1]);
    b.noalias() += u * u.transpose();
  }
  const Eigen::Matrix2d ainv = a.inverse();
  Eigen::Matrix2d cov = ainv * b * ainv;
  cov = 0.5 * (cov + cov.transpose());

  r.names = {"beta1", "beta2"};
  r.estimates = beta;
  r.vcov = cov;
  const double log_sigma = f.kind == FamilyKind::negbin ? std::log(sigma_nb) : 0.5 * std::log(phi);
  r.nuisance = {{"log_sigma", log_sigma}, {"phi", phi}, {"rho", rho}};
  r.edf = 4.0;
  r.converged = converged;
  r.iterations = iter;
  detail::finish_param(r, p);
  r.wall_ms = detail::elapsed_ms(start);
  return r;
}

// ---------------------------------------------------------------------------
// Reparameterization and the delta method

TimeEffect extract_time_effect(const FitResult& r) {
  if (r.param.kind == ParamKind::time_effect && r.has("beta_t")) {
    return {r.estimate("beta_t"), r.se("beta_t")};
  }
  if (!r.has("beta1") || !r.has("beta2")) throw DomainError("extract_time_effect: (beta1, beta2) block missing");
  const auto i = static_cast<Eigen::Index>(r.index("beta1"));
  const auto j = static_cast<Eigen::Index>(r.index("beta2"));
  if (r.vcov.rows() <= std::max(i, j)) throw DomainError("extract_time_effect: vcov block missing");
  const double var = r.vcov(j, j) + r.vcov(i, i) - 2.0 * r.vcov(i, j);
  return {r.estimates[j] - r.estimates[i], std::sqrt(std::max(0.0, var))};
}

FitResult reparameterize(const FitResult& r, ParamKind target) {
  if (r.param.kind == target) return r;
  FitResult out = r;
  const auto i = static_cast<Eigen::Index>(r.index("beta1"));
  const std::string_view from = target == ParamKind::time_effect ? "beta2" : "beta_t";
  const auto j = static_cast<Eigen::Index>(r.index(from));
  const auto np = r.estimates.size();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(np, np);
  // time_effect: beta_t = beta2 - beta1; marginal: beta2 = beta1 + beta_t
  jac(j, i) = target == ParamKind::time_effect ? -1.0 : 1.0;
  out.estimates = jac * r.estimates;
  out.vcov = jac * r.vcov * jac.transpose();
  out.names[static_cast<std::size_t>(j)] = target == ParamKind::time_effect ? "beta_t" : "beta2";
  out.param = {target};
  return out;
}

}  // namespace copreg

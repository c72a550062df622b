#include "copreg/copulas.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/owens_t.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "copreg/detail/math_policy.hpp"
#include "copreg/rng.hpp"
#include "copreg/specfun.hpp"

namespace copreg {

using detail::fast_policy;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFrankMax = 700.0;
constexpr double kIntervalEdge = 1.0 - 1e-12;

double logsumexp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log(1 + exp(x))
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// ---------------------------------------------------------------------------
// Bivariate normal and t pieces

double bvn_cdf(double h, double k, double rho) {
  if (rho == 0.0) return normal_cdf(h) * normal_cdf(k);
  if (h == 0.0 && k == 0.0) return 0.25 + std::asin(rho) / (2.0 * kPi);
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  auto owen = [&](double x, double other) {
    // T(x, (other - rho x) / (x s)), with the x = 0 limit atan(+-inf) / 2pi
    if (x == 0.0) return other > 0.0 ? 0.25 : (other < 0.0 ? -0.25 : 0.0);
    return boost::math::owens_t(x, (other - rho * x) / (x * s), fast_policy());
  };
  double delta = 0.0;
  if (h * k < 0.0 || (h * k == 0.0 && h + k < 0.0)) delta = 0.5;
  const double p = 0.5 * (normal_cdf(h) + normal_cdf(k)) - owen(h, k) - owen(k, h) - delta;
  return std::clamp(p, 0.0, std::min(normal_cdf(h), normal_cdf(k)));
}

using tdist = boost::math::students_t_distribution<double, fast_policy>;

struct TPieces {
  double x, y;
};

TPieces t_scores(double df, double u, double v) {
  const tdist t(df);
  return {boost::math::quantile(t, u), boost::math::quantile(t, v)};
}

double t_hfunc(double rho, double df, double x, double y) {
  const double scale = std::sqrt((df + x * x) * (1.0 - rho * rho) / (df + 1.0));
  return boost::math::cdf(tdist(df + 1.0), (y - rho * x) / scale);
}

double t_logdensity(double rho, double df, double u, double v) {
  const auto [x, y] = t_scores(df, u, v);
  const double r2 = 1.0 - rho * rho;
  const double q = (x * x + y * y - 2.0 * rho * x * y) / (df * r2);
  return std::lgamma(0.5 * (df + 2.0)) + std::lgamma(0.5 * df) - 2.0 * std::lgamma(0.5 * (df + 1.0)) -
         0.5 * std::log(r2) - 0.5 * (df + 2.0) * std::log1p(q) +
         0.5 * (df + 1.0) * (std::log1p(x * x / df) + std::log1p(y * y / df));
}

double t_cdf(double rho, double df, double u, double v) {
  // C(u, v) = u int_0^1 h(v | a = w u) dw: bounded, smooth integrand on the probability scale
  const tdist t(df);
  const double yv = boost::math::quantile(t, v);
  auto f = [&](double w) {
    // boost's t quantile overflows internally below about 1e-290 (df = 8);
    // the mass cut off is at most 1e-280
    const double a = std::max(w * u, 1e-280);
    return t_hfunc(rho, df, boost::math::quantile(t, a), yv);
  };
  const double c = u * integrate_unit_interval(f, 1e-15, 1e-14, 12).value;
  return std::clamp(c, std::max(0.0, u + v - 1.0), std::min(u, v));
}

// ---------------------------------------------------------------------------
// Unrotated families. Each handles the theta values its formulas admit.

double clayton_log_a(double th, double u, double v) {
  // log(u^-th + v^-th - 1)
  const double a = -th * std::log(u);
  const double b = -th * std::log(v);
  const double m = std::max(a, b);
  if (m < 1.0) return std::log1p(std::expm1(a) + std::expm1(b));
  return m + std::log(std::exp(a - m) + std::exp(b - m) - std::exp(-m));
}

double frank_log_neg_d(double th, double u, double v) {
  // log(-(e^-th - e^-th u - e^-th v + e^-th(u+v))) for th > 0, written without cancellation
  return logsumexp(-th * u + std::log(-std::expm1(-th * v)), -th * v + std::log(-std::expm1(-th * (1.0 - v))));
}

struct LogGumbel {
  double x, y, lx, ly, log_s, a;
};

LogGumbel gumbel_pieces(double th, double u, double v) {
  LogGumbel g{};
  g.x = -std::log(u);
  g.y = -std::log(v);
  g.lx = std::log(g.x);
  g.ly = std::log(g.y);
  g.log_s = logsumexp(th * g.lx, th * g.ly);
  g.a = std::exp(g.log_s / th);
  return g;
}

double joe_log_s(double th, double u, double v) {
  // log(a + b (1 - a)) with a = ub^th, b = vb^th; in log space because a and
  // b underflow when both u and v approach 1
  const double la = th * std::log1p(-u);
  const double lb = th * std::log1p(-v);
  return logsumexp(la, lb + std::log1p(-std::exp(la)));
}

double base_cdf(const CopulaModel& c, double u, double v);
double base_logdensity(const CopulaModel& c, double u, double v);
double base_hfunc(const CopulaModel& c, double u, double v);

double frank_cdf(double th, double u, double v) {
  if (std::abs(th) < 1e-12) return u * v;
  if (th < 0.0) return v - frank_cdf(-th, 1.0 - u, v);
  const double log_neg_d = std::log(-std::expm1(-th));
  return -(frank_log_neg_d(th, u, v) - log_neg_d) / th;
}

double frank_logdensity(double th, double u, double v) {
  if (std::abs(th) < 1e-12) return 0.0;
  if (th < 0.0) return frank_logdensity(-th, 1.0 - u, v);
  return std::log(th) + std::log(-std::expm1(-th)) - th * (u + v) - 2.0 * frank_log_neg_d(th, u, v);
}

double frank_hfunc(double th, double u, double v) {
  if (std::abs(th) < 1e-12) return v;
  if (th < 0.0) return frank_hfunc(-th, 1.0 - u, v);
  return std::exp(-th * u + std::log(-std::expm1(-th * v)) - frank_log_neg_d(th, u, v));
}

double frank_hinv(double th, double u, double w) {
  if (std::abs(th) < 1e-12) return w;
  if (th < 0.0) return frank_hinv(-th, 1.0 - u, w);
  // 1 + expm1(-th v) = (w e^-th + (1 - w) e^-th u) / (w + (1 - w) e^-th u)
  const double num = logsumexp(std::log(w) - th, std::log1p(-w) - th * u);
  const double den = logsumexp(std::log(w), std::log1p(-w) - th * u);
  return std::clamp(-(num - den) / th, 0.0, 1.0);
}

double base_cdf(const CopulaModel& c, double u, double v) {
  const double th = c.theta;
  switch (c.family) {
    case CopulaFamily::clayton:
      return std::exp(-clayton_log_a(th, u, v) / th);
    case CopulaFamily::gaussian:
      return bvn_cdf(normal_quantile(u), normal_quantile(v), th);
    case CopulaFamily::student_t:
      return t_cdf(th, c.df, u, v);
    case CopulaFamily::frank:
      return frank_cdf(th, u, v);
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard:
      return std::exp(-gumbel_pieces(th, u, v).a);
    case CopulaFamily::joe:
      return -std::expm1(joe_log_s(th, u, v) / th);
    case CopulaFamily::amh:
      return u * v / (1.0 - th * (1.0 - u) * (1.0 - v));
    case CopulaFamily::fgm:
      return u * v * (1.0 + th * (1.0 - u) * (1.0 - v));
    case CopulaFamily::plackett: {
      const double eta = th - 1.0;
      const double s = 1.0 + eta * (u + v);
      const double d = s * s - 4.0 * th * eta * u * v;
      return 2.0 * th * u * v / (s + std::sqrt(d));
    }
  }
  return 0.0;
}

double base_logdensity(const CopulaModel& c, double u, double v) {
  const double th = c.theta;
  switch (c.family) {
    case CopulaFamily::clayton:
      return std::log1p(th) - (1.0 + th) * (std::log(u) + std::log(v)) - (2.0 + 1.0 / th) * clayton_log_a(th, u, v);
    case CopulaFamily::gaussian: {
      const double x = normal_quantile(u);
      const double y = normal_quantile(v);
      const double r2 = (1.0 - th) * (1.0 + th);
      return -0.5 * std::log(r2) - (th * th * (x * x + y * y) - 2.0 * th * x * y) / (2.0 * r2);
    }
    case CopulaFamily::student_t:
      return t_logdensity(th, c.df, u, v);
    case CopulaFamily::frank:
      return frank_logdensity(th, u, v);
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard: {
      const LogGumbel g = gumbel_pieces(th, u, v);
      return -g.a + g.x + g.y + (th - 1.0) * (g.lx + g.ly) + (1.0 / th - 2.0) * g.log_s + std::log(g.a + th - 1.0);
    }
    case CopulaFamily::joe: {
      const double log_s = joe_log_s(th, u, v);
      return (1.0 / th - 2.0) * log_s + (th - 1.0) * (std::log1p(-u) + std::log1p(-v)) +
             std::log(th - 1.0 + std::exp(log_s));
    }
    case CopulaFamily::amh: {
      const double ub = 1.0 - u;
      const double vb = 1.0 - v;
      const double d = 1.0 - th * ub * vb;
      const double num = 1.0 + th * ((1.0 + u) * (1.0 + v) - 3.0) + th * th * ub * vb;
      return std::log(num) - 3.0 * std::log(d);
    }
    case CopulaFamily::fgm:
      return std::log1p(th * (1.0 - 2.0 * u) * (1.0 - 2.0 * v));
    case CopulaFamily::plackett: {
      const double eta = th - 1.0;
      const double s = 1.0 + eta * (u + v);
      const double d = s * s - 4.0 * th * eta * u * v;
      return std::log(th) + std::log1p(eta * (u + v - 2.0 * u * v)) - 1.5 * std::log(d);
    }
  }
  return 0.0;
}

double base_hfunc(const CopulaModel& c, double u, double v) {
  const double th = c.theta;
  switch (c.family) {
    case CopulaFamily::clayton:
      return std::exp(-(th + 1.0) * std::log(u) - (1.0 + 1.0 / th) * clayton_log_a(th, u, v));
    case CopulaFamily::gaussian: {
      const double x = normal_quantile(u);
      const double y = normal_quantile(v);
      return normal_cdf((y - th * x) / std::sqrt((1.0 - th) * (1.0 + th)));
    }
    case CopulaFamily::student_t: {
      const auto [x, y] = t_scores(c.df, u, v);
      return t_hfunc(th, c.df, x, y);
    }
    case CopulaFamily::frank:
      return frank_hfunc(th, u, v);
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard: {
      const LogGumbel g = gumbel_pieces(th, u, v);
      return std::exp(-g.a + g.x + (th - 1.0) * g.lx + (1.0 / th - 1.0) * g.log_s);
    }
    case CopulaFamily::joe: {
      const double log_s = joe_log_s(th, u, v);
      return std::exp((1.0 / th - 1.0) * log_s + (th - 1.0) * std::log1p(-u) +
                      std::log(-std::expm1(th * std::log1p(-v))));
    }
    case CopulaFamily::amh: {
      const double d = 1.0 - th * (1.0 - u) * (1.0 - v);
      return v * (1.0 - th * (1.0 - v)) / (d * d);
    }
    case CopulaFamily::fgm:
      return v * (1.0 + th * (1.0 - v) * (1.0 - 2.0 * u));
    case CopulaFamily::plackett: {
      const double eta = th - 1.0;
      const double s = 1.0 + eta * (u + v);
      const double d = s * s - 4.0 * th * eta * u * v;
      return 0.5 - 0.5 * (s - 2.0 * th * v) / std::sqrt(d);
    }
  }
  return 0.0;
}

double numeric_hinv(const CopulaModel& c, double u, double w) {
  auto f = [&](double v) {
    if (v <= 0.0) return -w;
    if (v >= 1.0) return 1.0 - w;
    return base_hfunc(c, u, v) - w;
  };
  std::uintmax_t iters = 200;
  const auto tol = boost::math::tools::eps_tolerance<double>(46);
  const auto [a, b] = boost::math::tools::toms748_solve(f, 0.0, 1.0, -w, 1.0 - w, tol, iters);
  if (iters >= 200) throw ConvergenceError("copula_hinv: root finder did not converge for " + c.describe());
  return 0.5 * (a + b);
}

double base_hinv(const CopulaModel& c, double u, double w) {
  const double th = c.theta;
  switch (c.family) {
    case CopulaFamily::clayton: {
      // v^-th - 1 = u^-th (w^(-th/(1+th)) - 1)
      const double q = -th * std::log(u) + std::log(std::expm1(-th / (1.0 + th) * std::log(w)));
      return std::exp(-softplus(q) / th);
    }
    case CopulaFamily::gaussian:
      return normal_cdf(th * normal_quantile(u) + std::sqrt((1.0 - th) * (1.0 + th)) * normal_quantile(w));
    case CopulaFamily::student_t: {
      const tdist t(c.df);
      const double x = boost::math::quantile(t, u);
      const double scale = std::sqrt((c.df + x * x) * (1.0 - th * th) / (c.df + 1.0));
      const double y = th * x + scale * boost::math::quantile(tdist(c.df + 1.0), w);
      return boost::math::cdf(t, y);
    }
    case CopulaFamily::frank:
      return frank_hinv(th, u, w);
    case CopulaFamily::fgm: {
      const double a = th * (1.0 - 2.0 * u);
      if (std::abs(a) < 1e-12) return w;
      // -a v^2 + (1 + a) v - w = 0, root in [0, 1]
      const double disc = std::sqrt((1.0 + a) * (1.0 + a) - 4.0 * a * w);
      return 2.0 * w / ((1.0 + a) + disc);
    }
    default:
      return numeric_hinv(c, u, w);
  }
}

// ---------------------------------------------------------------------------
// Kendall's tau for families without a closed form

double frank_tau(double th) {
  if (th < 0.0) return -frank_tau(-th);
  if (th < 1e-2) return th / 9.0 - th * th * th / 900.0;
  // Debye D1(th) = (1/th) int_0^th t / (e^t - 1) dt
  auto f = [th](double s) {
    const double t = th * s;
    return t / std::expm1(t);
  };
  const double d1 = integrate_unit_interval(f, 1e-15, 1e-14, 12).value;
  return 1.0 - 4.0 / th * (1.0 - d1);
}

double joe_tau(double th) {
  if (th == 1.0) return 0.0;
  // 1 + 4 int_0^1 phi(t) / phi'(t) dt, phi(t) = -log(1 - (1 - t)^th)
  // written as (1 - q) [log(1 - q) / q] (1 - t) / th with q = (1 - t)^th, which
  // stays finite when q underflows for large th
  auto f = [th](double t) {
    const double lq = th * std::log1p(-t);
    const double q = std::exp(lq);
    const double one_minus_q = -std::expm1(lq);
    const double log_omq = q < 0.5 ? std::log1p(-q) : std::log(one_minus_q);
    const double ratio = q > 0.0 ? log_omq / q : -1.0;
    return one_minus_q * ratio * (1.0 - t) / th;
  };
  return 1.0 + 4.0 * integrate_unit_interval(f, 1e-14, 1e-13, 12).value;
}

double amh_tau(double th) {
  if (std::abs(th) < 1e-2) {
    const double t2 = th * th;
    return 2.0 * th / 9.0 + t2 / 18.0 + t2 * th / 45.0 + t2 * t2 / 90.0 + 2.0 * t2 * t2 * th / 315.0;
  }
  return 1.0 - 2.0 * (th + (1.0 - th) * (1.0 - th) * std::log1p(-th)) / (3.0 * th * th);
}

double plackett_tau(double th) {
  const double eta = th - 1.0;
  if (std::abs(eta) < 1e-4) return 2.0 * eta / 9.0;
  // 1 - 4 int int dC/du dC/dv, with dC/dv(u, v) = h(u | v) by exchangeability
  CopulaModel c{CopulaFamily::plackett, th};
  auto outer = [&](double u) {
    auto inner = [&](double v) { return base_hfunc(c, u, v) * base_hfunc(c, v, u); };
    return integrate_unit_interval(inner, 1e-13, 1e-11, 12).value;
  };
  return 1.0 - 4.0 * integrate_unit_interval(outer, 1e-12, 1e-10, 12).value;
}

double base_tau(const CopulaModel& c) {
  const double th = c.theta;
  switch (c.family) {
    case CopulaFamily::clayton: return th / (th + 2.0);
    case CopulaFamily::gaussian:
    case CopulaFamily::student_t: return 2.0 / kPi * std::asin(th);
    case CopulaFamily::frank: return frank_tau(th);
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard: return 1.0 - 1.0 / th;
    case CopulaFamily::joe: return joe_tau(th);
    case CopulaFamily::amh: return amh_tau(th);
    case CopulaFamily::fgm: return 2.0 * th / 9.0;
    case CopulaFamily::plackett: return plackett_tau(th);
  }
  return 0.0;
}

void check_unit(double u, double v) {
  if (!(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0)) {
    throw DomainError("copula arguments must lie strictly inside (0,1)");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::clayton: return "clayton";
    case CopulaFamily::gaussian: return "gaussian";
    case CopulaFamily::frank: return "frank";
    case CopulaFamily::gumbel: return "gumbel";
    case CopulaFamily::joe: return "joe";
    case CopulaFamily::amh: return "amh";
    case CopulaFamily::fgm: return "fgm";
    case CopulaFamily::plackett: return "plackett";
    case CopulaFamily::hougaard: return "hougaard";
    case CopulaFamily::student_t: return "student_t";
  }
  return "?";
}

CopulaFamily parse_copula_family(std::string_view name) {
  for (CopulaFamily f : kAllCopulaFamilies) {
    if (to_string(f) == name) return f;
  }
  throw ParseError("unknown copula family '" + std::string(name) +
                   "' (expected clayton|gaussian|frank|gumbel|joe|amh|fgm|plackett|hougaard|student_t)");
}

std::vector<CopulaFamily> parse_copula_list(std::string_view list) {
  std::vector<CopulaFamily> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t end = std::min(list.find(',', pos), list.size());
    std::string_view item = list.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item == "all") {
      out.insert(out.end(), kAllCopulaFamilies.begin(), kAllCopulaFamilies.end());
    } else if (!item.empty()) {
      out.push_back(parse_copula_family(item));
    }
    pos = end + 1;
  }
  if (out.empty()) throw ParseError("empty copula list");
  return out;
}

std::string CopulaModel::describe() const {
  std::ostringstream os;
  os.precision(6);
  os << to_string(family) << "(theta=" << theta;
  if (family == CopulaFamily::student_t) os << ",df=" << df;
  if (rotation != 0) os << ",rot=" << rotation;
  os << ")";
  return os.str();
}

void validate(const CopulaModel& c) {
  const double th = c.theta;
  bool ok = std::isfinite(th);
  switch (c.family) {
    case CopulaFamily::clayton:
    case CopulaFamily::plackett:
      ok = ok && th > 0.0;
      break;
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard:
    case CopulaFamily::joe:
      ok = ok && th >= 1.0;
      break;
    case CopulaFamily::gaussian:
    case CopulaFamily::student_t:
      ok = ok && th > -1.0 && th < 1.0;
      break;
    case CopulaFamily::amh:
      ok = ok && th >= -1.0 && th < 1.0;
      break;
    case CopulaFamily::fgm:
      ok = ok && th >= -1.0 && th <= 1.0;
      break;
    case CopulaFamily::frank:
      ok = ok && std::abs(th) <= kFrankMax;
      break;
  }
  if (!ok) throw DomainError("copula parameter outside the admissible domain: " + c.describe());
  if (c.family == CopulaFamily::student_t && !(c.df > 2.0 && std::isfinite(c.df))) {
    throw DomainError("student_t copula requires df > 2: " + c.describe());
  }
  if (c.rotation != 0 && c.rotation != 90 && c.rotation != 180 && c.rotation != 270) {
    throw DomainError("copula rotation must be 0, 90, 180 or 270");
  }
}

double copula_eval(const CopulaModel& c, double u, double v, CopulaQuantity what, bool* clamped) {
  return what == CopulaQuantity::cdf ? copula_cdf(c, u, v) : copula_logdensity(c, u, v, clamped);
}

double copula_cdf(const CopulaModel& c, double u, double v) {
  validate(c);
  check_unit(u, v);
  switch (c.rotation) {
    case 90: return v - base_cdf(c, 1.0 - u, v);
    case 180: return u + v - 1.0 + base_cdf(c, 1.0 - u, 1.0 - v);
    case 270: return u - base_cdf(c, u, 1.0 - v);
    default: return base_cdf(c, u, v);
  }
}

double copula_logdensity(const CopulaModel& c, double u, double v, bool* clamped) {
  validate(c);
  check_unit(u, v);
  double ld = 0.0;
  switch (c.rotation) {
    case 90: ld = base_logdensity(c, 1.0 - u, v); break;
    case 180: ld = base_logdensity(c, 1.0 - u, 1.0 - v); break;
    case 270: ld = base_logdensity(c, u, 1.0 - v); break;
    default: ld = base_logdensity(c, u, v); break;
  }
  if (!(ld >= kLogDensityFloor)) {
    ld = kLogDensityFloor;
    if (clamped) *clamped = true;
  }
  return ld;
}

double copula_hfunc(const CopulaModel& c, double u, double v) {
  validate(c);
  check_unit(u, v);
  double h = 0.0;
  switch (c.rotation) {
    case 90: h = base_hfunc(c, 1.0 - u, v); break;
    case 180: h = 1.0 - base_hfunc(c, 1.0 - u, 1.0 - v); break;
    case 270: h = 1.0 - base_hfunc(c, u, 1.0 - v); break;
    default: h = base_hfunc(c, u, v); break;
  }
  return std::clamp(h, 0.0, 1.0);
}

double copula_hinv(const CopulaModel& c, double u, double w) {
  validate(c);
  check_unit(u, w);
  switch (c.rotation) {
    case 90: return base_hinv(c, 1.0 - u, w);
    case 180: return 1.0 - base_hinv(c, 1.0 - u, 1.0 - w);
    case 270: return 1.0 - base_hinv(c, u, 1.0 - w);
    default: return base_hinv(c, u, w);
  }
}

double tau_from_theta(const CopulaModel& c) {
  validate(c);
  const double t = base_tau(c);
  return (c.rotation == 90 || c.rotation == 270) ? -t : t;
}

std::pair<double, double> tau_range(CopulaFamily family) {
  switch (family) {
    case CopulaFamily::clayton:
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard:
    case CopulaFamily::joe:
      return {0.0, 1.0};
    case CopulaFamily::amh:
      return {amh_tau(-1.0), 1.0 / 3.0};
    case CopulaFamily::fgm:
      return {-2.0 / 9.0, 2.0 / 9.0};
    case CopulaFamily::frank:
      return {-frank_tau(kFrankMax), frank_tau(kFrankMax)};
    default:
      return {-1.0, 1.0};
  }
}

CopulaModel theta_from_tau(CopulaFamily family, double tau, double df) {
  const auto [lo, hi] = tau_range(family);
  const bool closed_low = family == CopulaFamily::gumbel || family == CopulaFamily::hougaard ||
                          family == CopulaFamily::joe || family == CopulaFamily::fgm;
  const bool inside = (tau < hi || (family == CopulaFamily::fgm && tau == hi)) &&
                      (tau > lo || (closed_low && tau == lo));
  if (!std::isfinite(tau) || !inside) {
    std::ostringstream os;
    os << "tau=" << tau << " is not attainable by the " << to_string(family) << " copula (range " << lo << ", "
       << hi << ")";
    throw DomainError(os.str());
  }
  CopulaModel c{family, 0.0, df, 0};
  switch (family) {
    case CopulaFamily::clayton: c.theta = 2.0 * tau / (1.0 - tau); return c;
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard: c.theta = 1.0 / (1.0 - tau); return c;
    case CopulaFamily::gaussian:
    case CopulaFamily::student_t: c.theta = std::sin(kPi * tau / 2.0); return c;
    case CopulaFamily::fgm: c.theta = 4.5 * tau; return c;
    default: break;
  }
  if (family == CopulaFamily::joe && tau == 0.0) {
    c.theta = 1.0;
    return c;
  }
  // monotone root in the unconstrained coordinate
  auto f = [&](double z) { return tau_from_theta(from_unconstrained(family, z)) - tau; };
  double a = -1.0;
  double b = 1.0;
  double fa = f(a);
  double fb = f(b);
  const double zmax = family == CopulaFamily::frank ? kFrankMax : 40.0;
  while (fa > 0.0 && a > -zmax) {
    b = a;
    fb = fa;
    a = std::max(2.0 * a, -zmax);
    fa = f(a);
  }
  while (fb < 0.0 && b < zmax) {
    a = b;
    fa = fb;
    b = std::min(2.0 * b, zmax);
    fb = f(b);
  }
  if (fa > 0.0 || fb < 0.0) throw ConvergenceError("theta_from_tau: could not bracket tau for " + std::string(to_string(family)));
  if (fa == 0.0) return from_unconstrained(family, a);
  if (fb == 0.0) return from_unconstrained(family, b);
  std::uintmax_t iters = 200;
  const auto [r0, r1] = boost::math::tools::toms748_solve(f, a, b, fa, fb,
                                                         boost::math::tools::eps_tolerance<double>(44), iters);
  if (iters >= 200) throw ConvergenceError("theta_from_tau: root finder did not converge");
  c = from_unconstrained(family, 0.5 * (r0 + r1));
  c.df = df;
  return c;
}

std::vector<std::pair<double, double>> sample_copula(const CopulaModel& c, std::size_t n, std::uint64_t seed) {
  validate(c);
  Rng rng = Rng::stream(seed, {0xC0B1ULL});
  std::vector<std::pair<double, double>> out(n);
  for (auto& p : out) {
    const double u = rng.uniform();
    const double w = rng.uniform();
    p = {u, std::clamp(copula_hinv(c, u, w), std::numeric_limits<double>::min(), 1.0 - 1e-16)};
  }
  return out;
}

double unconstrained(const CopulaModel& c) {
  validate(c);
  switch (c.family) {
    case CopulaFamily::clayton:
    case CopulaFamily::plackett: return std::log(c.theta);
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard:
    case CopulaFamily::joe: return std::log(c.theta - 1.0);
    case CopulaFamily::gaussian:
    case CopulaFamily::student_t:
    case CopulaFamily::amh:
    case CopulaFamily::fgm: return std::atanh(std::clamp(c.theta, -kIntervalEdge, kIntervalEdge));
    case CopulaFamily::frank: return c.theta;
  }
  return 0.0;
}

CopulaModel from_unconstrained(CopulaFamily family, double z) {
  if (!std::isfinite(z)) throw DomainError("from_unconstrained: z must be finite");
  CopulaModel c{family, 0.0};
  switch (family) {
    case CopulaFamily::clayton:
    case CopulaFamily::plackett: c.theta = std::exp(std::clamp(z, -700.0, 700.0)); break;
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard:
    case CopulaFamily::joe: c.theta = 1.0 + std::exp(std::clamp(z, -700.0, 700.0)); break;
    case CopulaFamily::gaussian:
    case CopulaFamily::student_t:
    case CopulaFamily::amh:
    case CopulaFamily::fgm: c.theta = std::clamp(std::tanh(z), -kIntervalEdge, kIntervalEdge); break;
    case CopulaFamily::frank: c.theta = std::clamp(z, -kFrankMax, kFrankMax); break;
  }
  return c;
}

double unconstrained_df(double df) {
  if (!(df > 2.0)) throw DomainError("student_t df must exceed 2");
  return std::log(df - 2.0);
}

double df_from_unconstrained(double z) { return 2.0 + std::exp(std::clamp(z, -700.0, 700.0)); }

bool clip_unit(double& u) {
  if (u < kClipEps) {
    u = kClipEps;
    return true;
  }
  if (u > 1.0 - kClipEps) {
    u = 1.0 - kClipEps;
    return true;
  }
  return false;
}

}  // namespace copreg

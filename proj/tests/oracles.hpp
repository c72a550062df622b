#pragma once

// Reference computations used by the tests. Each one avoids the code path it
// checks: brute force instead of merge sort, multiprecision series instead of
// the library quantile, finite differences instead of analytic densities.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "copreg/copulas.hpp"

namespace oracle {

/// O(n^2) Kendall tau-b.
inline double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  long double conc = 0;
  long double disc = 0;
  long double tx = 0;
  long double ty = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) {
        tx += 1;
        ty += 1;
      } else if (dx == 0) {
        tx += 1;
      } else if (dy == 0) {
        ty += 1;
      } else if ((dx > 0) == (dy > 0)) {
        conc += 1;
      } else {
        disc += 1;
      }
    }
  }
  const long double n0 = static_cast<long double>(n) * (n - 1) / 2;
  return static_cast<double>((conc - disc) / std::sqrt((n0 - tx) * (n0 - ty)));
}

using hp = boost::multiprecision::cpp_bin_float_50;

/// Phi(x) from the Maclaurin series of erf in 50-digit arithmetic (|x| < 6).
inline hp normal_cdf_series(const hp& x) {
  const hp z = x / boost::multiprecision::sqrt(hp(2));
  hp term = z;
  hp sum = z;
  const hp z2 = z * z;
  for (int n = 1; n < 400; ++n) {
    term *= -z2 / n;
    const hp add = term / (2 * n + 1);
    sum += add;
    if (boost::multiprecision::abs(add) < hp("1e-45")) break;
  }
  const hp erf = 2 * sum / boost::multiprecision::sqrt(boost::math::constants::pi<hp>());
  return (1 + erf) / 2;
}

/// Newton iteration on the series cdf.
inline double normal_quantile_series(double p) {
  hp x = 0;
  const hp target = p;
  for (int it = 0; it < 100; ++it) {
    const hp f = normal_cdf_series(x) - target;
    const hp dens = boost::multiprecision::exp(-x * x / 2) / boost::multiprecision::sqrt(2 * boost::math::constants::pi<hp>());
    const hp step = f / dens;
    x -= step;
    if (boost::multiprecision::abs(step) < hp("1e-40")) break;
  }
  return static_cast<double>(x);
}

/// W_{lambda,mu}(p) when mu - lambda - 1/2 = 0: the integrand reduces to
/// (1+t)^a e^{-pt} with a = mu + lambda - 1/2, whose integral is
/// e^p p^{-a-1} Gamma(a+1, p).
inline double whittaker_reduced(double lambda, double mu, double p) {
  const double a = mu + lambda - 0.5;
  const double upper = boost::math::tgamma(a + 1.0, p);
  return std::pow(p, mu + 0.5) * std::exp(-p / 2.0) * std::exp(p) * std::pow(p, -a - 1.0) * upper;
}

/// Breakpoints graded towards both edges of (0, 1).
inline const std::vector<double>& graded_breaks() {
  static const std::vector<double> b = {0.0,  1e-7, 1e-5, 1e-4, 1e-3, 0.01, 0.05, 0.2,     0.5,
                                        0.8,  0.95, 0.99, 0.999, 0.9999, 1 - 1e-5, 1 - 1e-7, 1.0};
  return b;
}

/// Product Gauss-Legendre (20 nodes per panel) over the graded partition of (0,1)^2.
template <typename F>
double unit_square_integral(F&& f) {
  boost::math::quadrature::gauss<double, 20> rule;
  const auto& b = graded_breaks();
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    total += rule.integrate(
        [&](double u) {
          double inner = 0.0;
          for (std::size_t j = 0; j + 1 < b.size(); ++j) {
            inner += rule.integrate([&](double v) { return f(u, v); }, b[j], b[j + 1]);
          }
          return inner;
        },
        b[i], b[i + 1]);
  }
  return total;
}

/// Kendall tau as 1 - 4 int int dC/du dC/dv du dv on the graded product rule.
/// The partials are h-functions (checked against finite differences of the
/// cdf in the copula tests); dC/dv(u, v) = h(u | v) for exchangeable families.
inline double copula_tau_double_integral(const copreg::CopulaModel& c) {
  return 1.0 - 4.0 * unit_square_integral(
                         [&](double u, double v) { return copreg::copula_hfunc(c, u, v) * copreg::copula_hfunc(c, v, u); });
}

/// Three dependence levels inside each family's attainable tau range.
inline std::vector<double> tau_levels(copreg::CopulaFamily f) {
  using copreg::CopulaFamily;
  switch (f) {
    case CopulaFamily::amh: return {-0.1, 0.1, 0.25};
    case CopulaFamily::fgm: return {-0.15, 0.05, 0.2};
    case CopulaFamily::clayton:
    case CopulaFamily::gumbel:
    case CopulaFamily::hougaard:
    case CopulaFamily::joe: return {0.1, 0.35, 0.6};
    default: return {-0.3, 0.2, 0.6};
  }
}

/// Central finite-difference mixed partial of the copula cdf.
inline double copula_density_fd(const copreg::CopulaModel& c, double u, double v, double h = 1e-4) {
  return (copreg::copula_cdf(c, u + h, v + h) - copreg::copula_cdf(c, u + h, v - h) - copreg::copula_cdf(c, u - h, v + h) +
          copreg::copula_cdf(c, u - h, v - h)) /
         (4 * h * h);
}

/// Skewness of a population distribution by the stated closed form.
inline double gamma_skewness(double sigma) { return 2.0 * sigma; }

}  // namespace oracle

#include <cmath>
#include <limits>
#include <numbers>

#include "copreg/specfun.hpp"

namespace copreg {

namespace {

constexpr double kPi = std::numbers::pi;

// Newton iteration on the orthonormal Hermite recurrence, initial guesses as in
// Numerical Recipes gauher. Stable well past order 100.
QuadratureRule hermite_newton(std::size_t n) {
  QuadratureRule rule;
  rule.kind = QuadratureKind::gauss_hermite;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const double pim4 = 1.0 / std::pow(kPi, 0.25);
  const std::size_t m = (n + 1) / 2;
  double z = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * rule.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * rule.nodes[1];
    } else {
      z = 2.0 * z - rule.nodes[i - 2];
    }
    double pp = 0.0;
    int it = 0;
    for (; it < 100; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jj = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (jj + 1.0)) * p2 - std::sqrt(jj / (jj + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    if (it == 100) throw ConvergenceError("gauss_hermite: Newton iteration failed");
    rule.nodes[i] = z;
    rule.nodes[n - 1 - i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  // ascending order
  for (std::size_t i = 0; i < n / 2; ++i) {
    std::swap(rule.nodes[i], rule.nodes[n - 1 - i]);
    std::swap(rule.weights[i], rule.weights[n - 1 - i]);
  }
  return rule;
}

}  // namespace

QuadratureRule gauss_hermite(std::size_t order) {
  if (order == 0) throw DomainError("gauss_hermite: order must be positive");
  if (order == 1) return {{0.0}, {std::sqrt(kPi)}, QuadratureKind::gauss_hermite};
  return hermite_newton(order);
}

QuadratureRule gauss_legendre(std::size_t order) {
  if (order == 0) throw DomainError("gauss_legendre: order must be positive");
  QuadratureRule rule;
  rule.kind = QuadratureKind::gauss_legendre;
  rule.nodes.assign(order, 0.0);
  rule.weights.assign(order, 0.0);
  const std::size_t n = order;
  const std::size_t m = (n + 1) / 2;
  for (std::size_t i = 0; i < m; ++i) {
    double z = std::cos(kPi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double pp = 0.0;
    int it = 0;
    for (; it < 100; ++it) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jj = static_cast<double>(j);
        p1 = ((2.0 * jj - 1.0) * z * p2 - (jj - 1.0) * p3) / jj;
      }
      pp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 4e-16) break;  // a few ulps: Newton may cycle at the last bit
    }
    if (it == 100) throw ConvergenceError("gauss_legendre: Newton iteration failed");
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return rule;
}

QuadratureRule gauss_legendre(std::size_t order, double a, double b) {
  QuadratureRule rule = gauss_legendre(order);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

namespace {

// Abscissa pair (x, 1 - x) and weight dx/dt for the tanh-sinh map
// x = (1 + tanh(pi/2 sinh t)) / 2 on (0, 1).
struct TanhSinhPoint {
  double x;
  double xc;
  double w;
};

TanhSinhPoint tanh_sinh_point(double t) {
  const double s = 0.5 * kPi * std::sinh(t);
  const double e = std::exp(-2.0 * std::abs(s));
  const double small = e / (1.0 + e);  // distance to the nearer endpoint
  const double big = 1.0 / (1.0 + e);
  const double sech = 2.0 * std::sqrt(e) / (1.0 + e);
  const double w = 0.25 * kPi * std::cosh(t) * sech * sech;
  if (s >= 0.0) return {big, small, w};
  return {small, big, w};
}

// Beyond |t| = 6.5 the weights are below 1e-300.
constexpr double kTanhSinhTmax = 6.5;

}  // namespace

QuadratureRule tanh_sinh(int level) {
  if (level < 0) throw DomainError("tanh_sinh: level must be >= 0");
  QuadratureRule rule;
  rule.kind = QuadratureKind::tanh_sinh;
  const double h = std::ldexp(1.0, -level);
  const long kmax = static_cast<long>(std::floor(kTanhSinhTmax / h));
  for (long k = -kmax; k <= kmax; ++k) {
    const auto pt = tanh_sinh_point(static_cast<double>(k) * h);
    if (pt.x <= 0.0 || pt.xc <= 0.0 || pt.w == 0.0) continue;
    rule.nodes.push_back(pt.x);
    rule.weights.push_back(pt.w * h);
  }
  return rule;
}

IntegrationResult integrate_unit_interval(const std::function<double(double)>& f, double abs_tol,
                                          double rel_tol, int max_level) {
  auto eval = [&](double t) {
    const auto pt = tanh_sinh_point(t);
    // abscissae that round to 1 or fall below the normal range are dropped;
    // the mass they carry is below 1e-8 even for 1/sqrt endpoint singularities
    if (pt.x < std::numeric_limits<double>::min() || pt.x >= 1.0 || pt.w == 0.0) return 0.0;
    const double fx = f(pt.x);
    if (!std::isfinite(fx)) {
      throw DomainError("integrate_unit_interval: integrand not finite");
    }
    return fx * pt.w;
  };

  // level 0: integer abscissae
  double h = 1.0;
  double sum = eval(0.0);
  for (double t = 1.0; t <= kTanhSinhTmax; t += 1.0) sum += eval(t) + eval(-t);
  double previous = sum * h;
  IntegrationResult result{previous, std::abs(previous), 0};
  for (int level = 1; level <= max_level; ++level) {
    h *= 0.5;
    // new abscissae are odd multiples of h
    for (double t = h; t <= kTanhSinhTmax; t += 2.0 * h) sum += eval(t) + eval(-t);
    const double current = sum * h;
    result = {current, std::abs(current - previous), level};
    if (level >= 3 && result.error <= std::max(abs_tol, rel_tol * std::abs(current))) {
      return result;
    }
    previous = current;
  }
  throw ConvergenceError("integrate_unit_interval: tolerance not reached after " +
                         std::to_string(max_level) + " levels");
}

}  // namespace copreg

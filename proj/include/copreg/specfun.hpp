#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "copreg/errors.hpp"

namespace copreg {

// ---------------------------------------------------------------------------
// Quadrature rules
// ---------------------------------------------------------------------------

enum class QuadratureKind { gauss_hermite, gauss_legendre, tanh_sinh };

/// Nodes and weights of a fixed rule.
///
/// gauss_hermite integrates against exp(-x^2) on the real line,
/// gauss_legendre on [-1, 1], tanh_sinh on (0, 1) at a given refinement level.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  QuadratureKind kind{QuadratureKind::gauss_legendre};

  std::size_t size() const { return nodes.size(); }
};

QuadratureRule gauss_hermite(std::size_t order);
QuadratureRule gauss_legendre(std::size_t order);
/// Gauss-Legendre nodes mapped to [a, b].
QuadratureRule gauss_legendre(std::size_t order, double a, double b);

/// Tanh-sinh rule on (0, 1) with step h = 2^-level. Nodes never touch the
/// endpoints, so integrable endpoint singularities are fine.
QuadratureRule tanh_sinh(int level);

struct IntegrationResult {
  double value{0.0};
  double error{0.0};
  int levels{0};
};

/// Adaptive tanh-sinh on (0, 1): refines until successive levels agree to
/// abs_tol (or rel_tol relative), throws ConvergenceError after max_level.
IntegrationResult integrate_unit_interval(const std::function<double(double)>& f,
                                          double abs_tol = 1e-12, double rel_tol = 1e-12,
                                          int max_level = 10);

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// ln Gamma(x) for finite x > 0.
double log_gamma(double x);

double normal_pdf(double x);
double normal_cdf(double x);
/// Inverse of normal_cdf; p must lie strictly inside (0, 1).
double normal_quantile(double p);

/// Whittaker W_{lambda,mu}(p) from its Laplace-type integral representation.
/// Requires p > 0 and mu - lambda + 1/2 > 0.
double whittaker_w(double lambda, double mu, double p);
/// Natural log of whittaker_w, for arguments where W under/overflows.
double log_whittaker_w(double lambda, double mu, double p);

// ---------------------------------------------------------------------------
// Nonparametric statistics
// ---------------------------------------------------------------------------

/// Kendall's tau-b in O(n log n). Throws DomainError on < 2 pairs, non-finite
/// values, or a margin that is entirely tied.
double kendall_tau(std::span<const double> x, std::span<const double> y);
double kendall_tau(std::span<const std::pair<double, double>> pairs);

/// Adjusted Fisher-Pearson sample skewness G1 = g1 * sqrt(n(n-1)) / (n-2).
double sample_skewness(std::span<const double> xs);

}  // namespace copreg

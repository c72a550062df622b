#include "copreg/specfun.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>

namespace copreg {

double log_gamma(double x) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError("log_gamma: argument must be finite and positive, got " + std::to_string(x));
  }
  return boost::math::lgamma(x);
}

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal_quantile: probability must lie in (0,1), got " + std::to_string(p));
  }
  if (p < 0.5) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

// W_{l,m}(p) = p^{m+1/2} e^{-p/2} / Gamma(m-l+1/2) * int_0^inf t^{m-l-1/2} (1+t)^{m+l-1/2} e^{-pt} dt.
// With s = p t the prefactor collapses to p^l e^{-p/2} / Gamma(a), a = m-l+1/2, and
// the remaining integral J = int s^{a-1} (1+s/p)^{m+l-1/2} e^{-s} ds tends to Gamma(a) as
// p grows. J is evaluated on (0,1) through s = u/(1-u).
double log_whittaker_w(double lambda, double mu, double p) {
  if (!std::isfinite(p) || p <= 0.0) {
    throw DomainError("whittaker_w: p must be positive, got " + std::to_string(p));
  }
  const double a = mu - lambda + 0.5;
  if (!(a > 0.0)) {
    throw DomainError("whittaker_w: requires mu - lambda + 1/2 > 0");
  }
  const double c = mu + lambda - 0.5;
  const double log_norm = log_gamma(a);
  // for p < 1, (1 + s/p)^c = p^{-c} (p + s)^c keeps the integrand bounded as p -> 0
  const bool small = p < 1.0;
  auto integrand = [&](double u) {
    const double uc = 1.0 - u;
    if (uc <= 0.0) return 0.0;  // s = inf: e^{-s} wins
    const double s = u / uc;
    const double growth = small ? c * std::log(p + s) : c * std::log1p(s / p);
    const double log_val = (a - 1.0) * std::log(s) - s + growth - log_norm - 2.0 * std::log(uc);
    return std::exp(log_val);
  };
  const IntegrationResult j = integrate_unit_interval(integrand, 1e-13, 1e-13, 12);
  if (!(j.value > 0.0)) throw ConvergenceError("whittaker_w: integral underflow");
  const double shift = small ? -c * std::log(p) : 0.0;
  return lambda * std::log(p) - 0.5 * p + shift + std::log(j.value);
}

double whittaker_w(double lambda, double mu, double p) {
  return std::exp(log_whittaker_w(lambda, mu, p));
}

namespace {

// Number of inversions (i < j with v[i] > v[j]); sorts v ascending.
std::int64_t count_inversions(std::vector<double>& v) {
  std::vector<double> buffer(v.size());
  std::int64_t swaps = 0;
  const std::size_t n = v.size();
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo;
      std::size_t j = mid;
      std::size_t k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += static_cast<std::int64_t>(mid - i);
          buffer[k++] = v[j++];
        } else {
          buffer[k++] = v[i++];
        }
      }
      while (i < mid) buffer[k++] = v[i++];
      while (j < hi) buffer[k++] = v[j++];
    }
    std::swap(v, buffer);
  }
  return swaps;
}

template <typename Eq>
std::int64_t tied_pairs(std::size_t n, Eq same_as_previous) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (same_as_previous(i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("kendall_tau: margins have different lengths");
  const std::size_t n = x.size();
  if (n < 2) throw DomainError("kendall_tau: need at least 2 pairs");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw DomainError("kendall_tau: non-finite value at index " + std::to_string(i));
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const auto n_pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t x_ties =
      tied_pairs(n, [&](std::size_t i) { return x[order[i]] == x[order[i - 1]]; });
  const std::int64_t joint_ties = tied_pairs(n, [&](std::size_t i) {
    return x[order[i]] == x[order[i - 1]] && y[order[i]] == y[order[i - 1]];
  });
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::int64_t discordant = count_inversions(ys);
  const std::int64_t y_ties = tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });

  const double denom = std::sqrt(static_cast<double>(n_pairs - x_ties)) *
                       std::sqrt(static_cast<double>(n_pairs - y_ties));
  if (denom == 0.0) throw DomainError("kendall_tau: a margin is constant");
  const auto numer = n_pairs - x_ties - y_ties + joint_ties - 2 * discordant;
  return std::clamp(static_cast<double>(numer) / denom, -1.0, 1.0);
}

double kendall_tau(std::span<const std::pair<double, double>> pairs) {
  std::vector<double> x(pairs.size());
  std::vector<double> y(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    x[i] = pairs[i].first;
    y[i] = pairs[i].second;
  }
  return kendall_tau(x, y);
}

double sample_skewness(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 3) throw DomainError("sample_skewness: need at least 3 observations");
  double mean = 0.0;
  for (double v : xs) {
    if (!std::isfinite(v)) throw DomainError("sample_skewness: non-finite value");
    mean += v;
  }
  mean /= static_cast<double>(n);
  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : xs) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  if (!(m2 > 1e-300) || m2 <= 1e-28 * mean * mean) {
    throw DomainError("sample_skewness: sample is constant");
  }
  const double g1 = m3 / std::pow(m2, 1.5);
  const double nn = static_cast<double>(n);
  return g1 * std::sqrt(nn * (nn - 1.0)) / (nn - 2.0);
}

}  // namespace copreg

#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <numbers>

#include "copreg/detail/math_policy.hpp"
#include "copreg/distributions.hpp"

namespace copreg::detail {

/// Per-observation log likelihood and derivatives in eta and log sigma.
struct ObsTerms {
  double ll{0.0};
  double d1{0.0};   // d ll / d eta
  double d2{0.0};   // d2 ll / d eta2
  double ds{0.0};   // d ll / d log sigma
  double des{0.0};  // d2 ll / d eta d log sigma
  double dss{0.0};  // d2 ll / d log sigma2
};

/// y-dependent constants that do not change with eta.
struct ObsCache {
  double c0{0.0};
  double c1{0.0};
  double c2{0.0};
};

/// Log likelihood kernel for one family, link and sigma, with constants hoisted.
class FamilyKernel {
 public:
  FamilyKernel(ResponseFamily f, LinkFunction link, double sigma) : f_(f), link_(link), sigma_(sigma) {
    const auto pol = fast_policy();
    switch (f.kind) {
      case FamilyKind::normal:
        k0_ = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
        break;
      case FamilyKind::gamma:
        a_ = 1.0 / (sigma * sigma);
        k0_ = a_ * std::log(a_) - boost::math::lgamma(a_, pol);
        psi_ = boost::math::digamma(a_, pol);
        tri_ = boost::math::trigamma(a_, pol);
        break;
      case FamilyKind::negbin:
        a_ = 1.0 / sigma;
        k0_ = -boost::math::lgamma(a_, pol);
        psi_ = boost::math::digamma(a_, pol);
        tri_ = boost::math::trigamma(a_, pol);
        break;
    }
  }

  /// level 0: ll; 1: + d1, d2, ds; 2: + des, dss.
  ObsCache cache(double y, int level) const {
    ObsCache c;
    const auto pol = fast_policy();
    switch (f_.kind) {
      case FamilyKind::normal:
        break;
      case FamilyKind::gamma:
        c.c0 = std::log(y);
        break;
      case FamilyKind::negbin:
        c.c0 = boost::math::lgamma(y + a_, pol) - boost::math::lgamma(y + 1.0, pol);
        if (level >= 1) c.c1 = boost::math::digamma(y + a_, pol);
        if (level >= 2) c.c2 = boost::math::trigamma(y + a_, pol);
        break;
    }
    return c;
  }

  ObsTerms eval(double y, const ObsCache& c, double eta, int level) const {
    ObsTerms t;
    const bool log_link = link_.kind == LinkKind::log;
    const double mu = log_link ? std::exp(eta) : eta;
    const double log_mu = log_link ? eta : (mu > 0.0 ? std::log(mu) : 0.0);
    // dmu/deta and d2mu/deta2
    const double m1 = log_link ? mu : 1.0;
    const double m2 = log_link ? mu : 0.0;
    double lm = 0.0;   // d ll / d mu
    double lmm = 0.0;  // d2 ll / d mu2
    double lms = 0.0;  // d2 ll / d mu d log sigma
    switch (f_.kind) {
      case FamilyKind::normal: {
        const double r = y - mu;
        const double s2 = sigma_ * sigma_;
        t.ll = k0_ - 0.5 * r * r / s2;
        if (level >= 1) {
          lm = r / s2;
          lmm = -1.0 / s2;
          t.ds = -1.0 + r * r / s2;
        }
        if (level >= 2) {
          lms = -2.0 * r / s2;
          t.dss = -2.0 * r * r / s2;
        }
        break;
      }
      case FamilyKind::gamma: {
        const double ratio = y / mu;
        t.ll = k0_ - a_ * log_mu + (a_ - 1.0) * c.c0 - a_ * ratio;
        if (level >= 1) {
          lm = a_ * (y - mu) / (mu * mu);
          lmm = a_ * (mu - 2.0 * y) / (mu * mu * mu);
          const double g = std::log(a_) + 1.0 - psi_ - log_mu + c.c0 - ratio;
          t.ds = -2.0 * a_ * g;
          if (level >= 2) {
            lms = -2.0 * lm;
            t.dss = 4.0 * a_ * g + 4.0 * a_ - 4.0 * a_ * a_ * tri_;
          }
        }
        break;
      }
      case FamilyKind::negbin: {
        const double r = a_;
        const double sm = sigma_ * mu;
        const double l1p = std::log1p(sm);
        t.ll = c.c0 + k0_ + y * (std::log(sigma_) + log_mu) - (y + r) * l1p;
        if (level >= 1) {
          const double v = mu * (1.0 + sm);
          lm = (y - mu) / v;
          lmm = (-v - (y - mu) * (1.0 + 2.0 * sm)) / (v * v);
          const double q = sm / (1.0 + sm);
          const double psi_diff = c.c1 - psi_ - l1p;
          t.ds = -r * psi_diff + y - (y + r) * q;
          if (level >= 2) {
            lms = -(y - mu) * sigma_ / ((1.0 + sm) * (1.0 + sm));
            t.dss = r * psi_diff + r * r * (c.c2 - tri_) + 2.0 * r * q - (y + r) * q * (1.0 - q);
          }
        }
        break;
      }
    }
    if (level >= 1) {
      t.d1 = lm * m1;
      t.d2 = lmm * m1 * m1 + lm * m2;
    }
    if (level >= 2) t.des = lms * m1;
    return t;
  }

  double a() const { return a_; }

 private:
  ResponseFamily f_;
  LinkFunction link_;
  double sigma_;
  double a_{0.0};
  double k0_{0.0};
  double psi_{0.0};
  double tri_{0.0};
};

}  // namespace copreg::detail

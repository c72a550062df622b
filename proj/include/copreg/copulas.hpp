#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "copreg/errors.hpp"

namespace copreg {

enum class CopulaFamily { clayton, gaussian, frank, gumbel, joe, amh, fgm, plackett, hougaard, student_t };

inline constexpr std::array<CopulaFamily, 10> kAllCopulaFamilies = {
    CopulaFamily::clayton, CopulaFamily::gaussian, CopulaFamily::frank,    CopulaFamily::gumbel,
    CopulaFamily::joe,     CopulaFamily::amh,      CopulaFamily::fgm,      CopulaFamily::plackett,
    CopulaFamily::hougaard, CopulaFamily::student_t};

std::string_view to_string(CopulaFamily f);
/// Lowercase family names exactly as listed in kAllCopulaFamilies.
CopulaFamily parse_copula_family(std::string_view name);
/// Comma-separated list of family names.
std::vector<CopulaFamily> parse_copula_list(std::string_view list);

/// Bivariate copula with dependence parameter theta.
///
/// Domains: clayton theta > 0; gumbel, hougaard, joe theta >= 1;
/// gaussian, student_t, amh, fgm theta in (-1, 1) (fgm and amh also accept the
/// closed endpoints allowed by their formulas); frank theta != 0 with
/// |theta| <= 700; plackett theta > 0. student_t needs df > 2.
/// rotation in {0, 90, 180, 270} degrees, counter-clockwise.
struct CopulaModel {
  CopulaFamily family{CopulaFamily::gaussian};
  double theta{0.0};
  double df{4.0};
  int rotation{0};

  /// Number of dependence parameters (2 for student_t, else 1).
  int n_params() const { return family == CopulaFamily::student_t ? 2 : 1; }
  std::string describe() const;
};

/// Throws DomainError if theta, df or rotation are outside the admissible domain.
void validate(const CopulaModel& c);

enum class CopulaQuantity { cdf, logdensity };

/// C(u, v) or log c(u, v) for u, v strictly inside (0, 1). A log density below
/// the representable range is clamped to kLogDensityFloor and *clamped is set.
double copula_eval(const CopulaModel& c, double u, double v, CopulaQuantity what, bool* clamped = nullptr);
double copula_cdf(const CopulaModel& c, double u, double v);
double copula_logdensity(const CopulaModel& c, double u, double v, bool* clamped = nullptr);

inline constexpr double kLogDensityFloor = -700.0;

/// Conditional distribution h(v | u) = dC(u, v)/du.
double copula_hfunc(const CopulaModel& c, double u, double v);
/// Solves h(v | u) = w for v.
double copula_hinv(const CopulaModel& c, double u, double w);

/// Kendall's tau of the model.
double tau_from_theta(const CopulaModel& c);
/// Unrotated model with the given tau (df kept at `df` for student_t).
CopulaModel theta_from_tau(CopulaFamily family, double tau, double df = 4.0);
/// Open interval of tau attainable by the unrotated family.
std::pair<double, double> tau_range(CopulaFamily family);

/// n pairs by conditional inversion, v = h^-1(w | u).
std::vector<std::pair<double, double>> sample_copula(const CopulaModel& c, std::size_t n, std::uint64_t seed);

/// Smooth bijection of theta onto the real line.
double unconstrained(const CopulaModel& c);
CopulaModel from_unconstrained(CopulaFamily family, double z);
/// student_t df <-> log(df - 2).
double unconstrained_df(double df);
double df_from_unconstrained(double z);

/// Clip to [kClipEps, 1 - kClipEps]; returns true when the value moved.
inline constexpr double kClipEps = 1e-12;
bool clip_unit(double& u);

}  // namespace copreg

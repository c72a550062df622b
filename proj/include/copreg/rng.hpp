#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace copreg {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seeded random stream with portable variate generators.
///
/// All variates are produced by code in this library on top of mt19937_64
/// (whose output sequence is fixed by the standard), so a given seed yields the
/// same numbers on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Stream keyed by (master seed, key...). Distinct key tuples give
  /// statistically independent streams, independent of call order.
  static Rng stream(std::uint64_t master, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Gamma(shape, scale), Marsaglia-Tsang squeeze with the U^(1/a) boost for a < 1.
  double gamma(double shape, double scale = 1.0);
  /// log of a Gamma(shape, 1) variate; safe for very small shapes.
  double log_gamma_variate(double shape);
  double beta(double a, double b);
  std::int64_t poisson(double lambda);

 private:
  std::mt19937_64 engine_;
  bool has_spare_{false};
  double spare_{0.0};
};

}  // namespace copreg

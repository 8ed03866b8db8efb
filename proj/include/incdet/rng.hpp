#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace incdet {

/// Deterministic random stream. mt19937_64 supplies the bits but every
/// distribution is implemented here explicitly — std::uniform_real_distribution
/// and friends are implementation-defined, which would break the requirement
/// that identical seeds give identical datasets everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform in [0, 1): top 53 bits scaled, the standard double construction.
  double uniform() {
    return static_cast<double>(bits() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] via rejection sampling (unbiased).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = bits();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  // Box–Muller without the usual cached second value, so each call consumes a
  // fixed amount of stream state regardless of call history.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream: the label is mixed through splitmix64 so
  // fork(0), fork(1), ... are decorrelated even for adjacent labels.
  Rng fork(std::uint64_t label) {
    std::uint64_t z = bits() + 0x9e3779b97f4a7c15ULL * (label + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace incdet

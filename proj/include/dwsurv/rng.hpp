#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace dwsurv {

// Deterministic stream-splitting RNG. Every consumer derives its own stream
// from (seed, path...) where the path encodes replication, site and purpose
// counters, so parallel and serial execution consume identical draws and a
// pooled run sees the same data as a distributed run of the same scenario.
//
// The real-valued transforms are written out explicitly (53-bit uniforms,
// Box-Muller normals) instead of going through std::*_distribution, whose
// algorithms are implementation-defined; output is therefore reproducible
// across standard libraries.
class SplitRng {
 public:
  // Stream purposes used by the simulation engine.
  enum Purpose : std::uint64_t {
    kCovariates = 1,
    kAlphas = 2,
    kTreatment = 3,
    kOutcome = 4,
    kCensoring = 5,
    kCohort = 6,
  };

  static SplitRng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix(seed + 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t c : path) {
      h = mix(h ^ (mix(c + 0x9e3779b97f4a7c15ULL) + (h << 6) + (h >> 2)));
    }
    return SplitRng(h);
  }

  explicit SplitRng(std::uint64_t derived_seed) : engine_(derived_seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double u01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  int bernoulli(double p) { return u01() < p ? 1 : 0; }

  double normal(double mean = 0.0, double sd = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sd * spare_;
    }
    const double u1 = 1.0 - u01();  // (0, 1], keeps log finite
    const double u2 = u01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + sd * r * std::cos(theta);
  }

  double lognormal(double meanlog, double sdlog) {
    return std::exp(normal(meanlog, sdlog));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d4a2b591ac585cULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dwsurv

#pragma once

#include <cmath>
#include <cstdint>

namespace prodest::rng {

//! Deterministic counter-seeded generator (SplitMix64 core).
//!
//! Every stochastic routine in the library takes an explicit seed and derives
//! substreams with `substream`, so identical (seed, job) pairs reproduce
//! bit-identical output regardless of scheduling.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  //! Independent stream derived from a master seed and a stream index.
  static Rng substream(std::uint64_t master, std::uint64_t stream) {
    Rng mix(master + 0x9e3779b97f4a7c15ULL * (stream + 1));
    // burn a few outputs so nearby stream ids decorrelate
    mix.next_u64();
    mix.next_u64();
    return Rng(mix.next_u64());
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  //! Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  //! Integer uniform on [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  //! Standard normal via Box-Muller, second draw cached.
  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    cache_ = radius * std::sin(angle);
    have_cache_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  //! Rademacher sign: +1 or -1 with equal probability.
  double sign() { return (next_u64() & 1ULL) ? 1.0 : -1.0; }

private:
  std::uint64_t state_;
  bool have_cache_ = false;
  double cache_ = 0.0;
};

} // namespace prodest::rng

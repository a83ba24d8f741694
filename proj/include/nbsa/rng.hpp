#pragma once

#include <cmath>
#include <cstdint>

namespace nbsa {

// Counter-based splitmix64 generator. State advances by the golden-ratio
// increment and each output is a pure mix of the state, so the i-th draw is a
// function of (seed, i) alone. The exact algorithm is written out in
// docs/rng.md; the phantom generator and the parameter initializer both rely
// on it for cross-run (and cross-language) reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  // Independent substream: reseeds through the mixer so streams derived with
  // distinct tags never share draws with the parent sequence.
  Rng fork(std::uint64_t tag) const { return Rng(mix(state_ + mix(tag + 0x632BE59BD9B4E019ULL))); }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive; modulo bias is irrelevant
  // at the n used here (all far below 2^32).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // One Box-Muller draw per call; the sine partner is discarded to keep the
  // draw count a simple function of the call count.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace nbsa

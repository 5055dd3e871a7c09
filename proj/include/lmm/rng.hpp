#pragma once

// Deterministic random number generation.
//
// Every stochastic component in this project (parameter init, batch
// shuffling, dropout masks, latent noise, corpus generation) draws from
// this generator so that a fixed seed yields bit-identical behaviour on
// any platform. We deliberately avoid std::uniform_real_distribution and
// friends: the standard pins the engines but not the distributions, so
// their output differs between standard libraries.
//
// The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit
// counter advanced by the golden-ratio increment 0x9e3779b97f4a7c15,
// finalized with two xor-shift multiplies. It is tiny, splittable and
// passes BigCrush when used as specified.

#include <cmath>
#include <cstdint>

namespace lmm {

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // Core SplitMix64 step.
  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1): top 53 bits scaled by 2^-53.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n). n must be positive. Modulo bias is negligible for
  // the corpus/batch sizes used here and keeps the stream simple.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Standard normal via the Box-Muller transform, one value per call
  // (the sine half is discarded so the stream does not depend on call
  // parity). u1 is mapped into (0, 1] to keep the log finite.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Derive an independent stream from this seed and a key. Used to give
  // each corpus index / sweep cell its own generator.
  static uint64_t mix(uint64_t seed, uint64_t key) {
    Rng r(seed ^ (0x9e3779b97f4a7c15ull * (key + 1)));
    return r.next_u64();
  }

 private:
  uint64_t state_;
};

}  // namespace lmm

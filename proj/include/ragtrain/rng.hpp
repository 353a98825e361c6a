#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ragtrain {

/// Deterministic stream RNG. Every consumer derives its own stream from a
/// master seed plus a purpose key, so reproducibility never depends on call
/// order across subsystems. Uniform draws are built from raw 64-bit output
/// rather than std::uniform_* distributions, which are not pinned by the
/// standard.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t key) : engine_(key) {}

  /// Folds a label and integer subkeys into a stream key (splitmix64 mixing).
  static std::uint64_t derive_key(std::uint64_t seed, std::string_view label,
                                  std::uint64_t a = 0, std::uint64_t b = 0,
                                  std::uint64_t c = 0) {
    std::uint64_t h = seed;
    for (const char ch : label) h = mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(ch)));
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return h;
  }

  static StreamRng derive(std::uint64_t seed, std::string_view label,
                          std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0) {
    return StreamRng(derive_key(seed, label, a, b, c));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), n >= 1. Rejection-free modulo is fine here;
  /// n is tiny compared to 2^64, so the bias is far below any test tolerance.
  std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Samples an index from an explicit probability vector via CDF walk.
  /// Probabilities need not be perfectly normalized; the walk falls through
  /// to the last positive entry.
  template <typename ProbContainer>
  std::size_t sample_discrete(const ProbContainer& probs) {
    const double u = uniform01();
    double acc = 0.0;
    std::size_t last_positive = 0;
    bool seen = false;
    for (std::size_t i = 0; i < static_cast<std::size_t>(probs.size()); ++i) {
      const double p = probs[i];
      if (p > 0.0) {
        last_positive = i;
        seen = true;
      }
      acc += p;
      if (u < acc) return i;
    }
    return seen ? last_positive : 0;
  }

  /// Fisher-Yates shuffle with the portable index draw.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace ragtrain

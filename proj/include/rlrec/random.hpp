#pragma once

#include <cstdint>
#include <random>

namespace rlrec {

/// Seeded generator with platform-independent derived draws.
///
/// std::uniform_real_distribution is implementation-defined, so uniforms are
/// produced directly from the 64-bit engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Independent stream derived from this seed and a stream label.
  static Rng derive(std::uint64_t seed, std::uint64_t stream_a,
                    std::uint64_t stream_b = 0) {
    return Rng(mix(seed ^ mix(stream_a + 0x9e3779b97f4a7c15ULL) ^
                   mix(stream_b + 0x632be59bd9b4e019ULL)));
  }

  /// splitmix64 finalizer.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rlrec

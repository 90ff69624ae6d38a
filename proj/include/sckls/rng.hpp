#pragma once

#include <cstdint>

namespace sckls::rng {

// SplitMix64 finalizer. Used both as the per-counter output function and to
// derive stream keys, so any (master seed, stream ids, counter) tuple maps to
// the same draw regardless of evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Standard normal quantile (Wichura's PPND16 rational approximation,
/// accurate to ~1e-16). p must lie in (0, 1).
double normal_quantile(double p);

/// Counter-based random stream. Output i is a pure function of
/// (master, stream ids, i); streams for distinct id tuples are independent
/// for practical purposes.
class Stream {
 public:
  explicit Stream(std::uint64_t master, std::uint64_t s1 = 0,
                  std::uint64_t s2 = 0, std::uint64_t s3 = 0) {
    key_ = splitmix64(master ^ 0x7A5C3D1F2B496857ULL);
    key_ = splitmix64(key_ + s1);
    key_ = splitmix64(key_ + s2);
    key_ = splitmix64(key_ + s3);
    counter_ = 0;
  }

  std::uint64_t next_u64() { return splitmix64(key_ + 0xD1342543DE82EF95ULL * ++counter_); }

  /// Uniform on (0, 1), endpoints excluded.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// N(0, 1) via the inverse CDF; one counter tick per draw.
  double normal() { return normal_quantile(uniform01()); }

  /// ±1 with equal probability.
  double rademacher() { return (next_u64() & 1) ? 1.0 : -1.0; }

  /// Mammen's two-point distribution: mean 0, variance 1.
  double mammen();

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace sckls::rng

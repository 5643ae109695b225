#pragma once

#include <cstdint>
#include <string_view>

namespace stivae {

/// SplitMix64 finalizer. Used for seeding and for deriving child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed = splitmix64(splitmix64(base) ^ fnv1a(tag) + index).
/// Every component seed in the library is derived this way from a single user seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0);

/// xoshiro256** (Blackman & Vigna) with state filled from splitmix64(seed).
/// Normal deviates use the Marsaglia polar method, so streams are identical on
/// every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stivae

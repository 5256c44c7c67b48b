#pragma once

#include <cstdint>

namespace aldk {

/// splitmix64 (Steele, Lea, Flood). Bit-exact across languages, so datasets
/// and initializations reproduce anywhere.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), n > 0.
  std::uint64_t below(std::uint64_t n) noexcept { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Independent child seed for stream `index` under `seed`.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  SplitMix64 s(seed ^ (0xD1B54A32D192ED03ULL * (index + 1)));
  return s.next();
}

}  // namespace aldk

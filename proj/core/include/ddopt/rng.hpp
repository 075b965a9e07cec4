#pragma once

#include <cmath>
#include <cstdint>

namespace ddopt {

// Counter-based pseudo-random generator. Output k of a stream with key K is
// a stateless hash of (K, k), so streams can be split hierarchically
// (experiment -> trial -> iteration) and every consumer reproduces its
// sequence independently of scheduling. The core is the splitmix64
// finalizer over a Weyl sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  static Rng from_seed(std::uint64_t seed) { return Rng(mix(seed ^ kSeedTag)); }

  // Derives an independent stream. Distinct `stream` values give distinct
  // keys with overwhelming probability; the derivation is order-free.
  Rng split(std::uint64_t stream) const {
    return Rng(mix(key_ + kGolden * (stream + 1)) ^ mix(stream ^ kSplitTag));
  }

  std::uint64_t next_u64() {
    counter_ += 1;
    return mix(key_ + kGolden * counter_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection keeps it exactly uniform.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * kPi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t key() const { return key_; }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kSeedTag = 0x8BADF00D5EEDC0DEULL;
  static constexpr std::uint64_t kSplitTag = 0xD1B54A32D192ED03ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ddopt

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

namespace darthkit {

/// Stream roles used to key independent random streams off one seed.
enum class StreamRole : std::uint64_t {
  kGeneric = 0,
  kTeacherView = 1,
  kStudentView = 2,
  kContrastiveView = 3,
  kSampling = 4,
  kShuffle = 5,
  kInit = 6,
  kScene = 7,
  kNoise = 8,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

/// Counter-based generator: the i-th draw is a pure function of (key, i), so
/// a stream keyed by (seed, index, role) is reproducible regardless of which
/// worker consumes it. Satisfies UniformRandomBitGenerator.
class KeyedRng {
 public:
  using result_type = std::uint64_t;

  explicit KeyedRng(std::uint64_t seed, std::uint64_t index = 0,
                    StreamRole role = StreamRole::kGeneric) noexcept
      : key_(mix_key(mix_key(seed, index), static_cast<std::uint64_t>(role))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return splitmix64(key_ + (counter_++) * 0xD1B54A32D192ED03ULL); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = (*this)();
    while (x >= limit) x = (*this)();
    return x % n;
  }

  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal() noexcept {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <class It>
  void shuffle(It first, It last) noexcept {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      using std::swap;
      swap(first[i - 1], first[below(i)]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace darthkit

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ivkit {

/// splitmix64 step; used to derive independent stream seeds so that work
/// items can be evaluated in any order (or in parallel) with identical
/// results.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for sub-stream `stream` of a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1342543de82ef95ULL);
  splitmix64(s);
  return splitmix64(s);
}

/// Deterministic random generator. The uniform and normal draws are pinned
/// algorithms (bit-shift uniform, Box-Muller) on top of std::mt19937_64,
/// whose output sequence is fixed by the standard; results do not depend on
/// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed), seed_tag_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on (0, 1); never returns exactly 0.
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the spare draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// +1 or -1 with equal probability.
  double rademacher() { return (gen_() & 1ULL) ? 1.0 : -1.0; }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }

  /// Derive an independent child generator.
  Rng split(std::uint64_t stream) const {
    return Rng(derive_seed(seed_tag_, stream));
  }

  /// Fisher-Yates shuffle of indices 0..n-1.
  template <typename Int>
  void shuffle(std::vector<Int>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_tag_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ivkit

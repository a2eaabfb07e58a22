#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace cbfn {

// Deterministic splitmix64-based generator. Every stream is derived from
// explicit integer keys, so draws are reproducible independent of call
// order elsewhere in the program (the training loop keys one stream per
// (seed, epoch, sample)).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kPhi)) {}

  // Derives an independent stream from (seed, a, b). Used for per-sample
  // and per-parameter streams.
  static Rng keyed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = mix(seed ^ kPhi);
    s = mix(s ^ mix(a + 0x9e3779b97f4a7c15ull));
    s = mix(s ^ mix(b + 0xbf58476d1ce4e5b9ull));
    Rng r(0);
    r.state_ = s;
    r.has_spare_ = false;
    return r;
  }

  std::uint64_t next_u64() {
    state_ += kPhi;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0.
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(uniform() * static_cast<double>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (pair cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  template <typename T>
  void fill_normal(std::span<T> out, double mean, double stddev) {
    for (T& v : out) {
      v = static_cast<T>(mean + stddev * normal());
    }
  }

  template <typename I>
  void shuffle(std::span<I> items) {
    for (std::int64_t i = static_cast<std::int64_t>(items.size()) - 1; i > 0; --i) {
      const std::int64_t j = uniform_int(i + 1);
      std::swap(items[i], items[j]);
    }
  }

 private:
  static constexpr std::uint64_t kPhi = 0x9e3779b97f4a7c15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z += kPhi;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cbfn

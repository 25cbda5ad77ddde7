#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace rfusion {

/// SplitMix64 finalizer; a strong 64-bit mixing bijection.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a child key from a parent key and an index (stream splitting).
constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t index) {
  return mix64(key ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// FNV-1a, used to turn stream labels into keys.
constexpr std::uint64_t label_key(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based generator: output i is mix64(key, i). Streams are addressed by
/// key, so sample n of a dataset can be generated independently of sample n-1,
/// and results never depend on the standard library's distribution code.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}
  CounterRng(std::uint64_t key, std::string_view label) : key_(derive_key(key, label_key(label))) {}

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n > 0. Modulo bias is below n / 2^64.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  CounterRng split(std::uint64_t index) const { return CounterRng(derive_key(key_, index)); }
  CounterRng split(std::string_view label) const { return CounterRng(key_, label); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rfusion

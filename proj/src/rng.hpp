#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "error.hpp"

namespace est {

// Deterministic random source. mt19937_64 is fully specified by the standard;
// the uniform/normal transforms are written out here so the produced stream
// does not depend on the standard library's distribution implementations,
// which are allowed to differ between toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53 usable bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the spare value is cached so draws come
  // in a fixed, reproducible order.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) fail(ErrorCode::invalid_argument, "uniform_int: n must be >= 1");
    // Rejection sampling to avoid modulo bias.
    uint64_t span = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<int>(x % span);
  }

  // Fisher-Yates shuffle with a fixed visit order.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a user seed with a per-purpose tag so different consumers (data
// generation, weight init, epoch shuffling) get unrelated streams from one
// --seed value. splitmix64 finalizer.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace seed_tag {
constexpr uint64_t dataset = 1;
constexpr uint64_t weights = 2;
constexpr uint64_t training = 3;
}  // namespace seed_tag

}  // namespace est

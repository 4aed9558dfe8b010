#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace rtv {

// Deterministic RNG. All randomness in the system (init, dropout, shuffling,
// synthetic data) flows through one of these, so a fixed seed reproduces a
// run bit-for-bit. Raw bits come from splitmix64-seeded xoshiro256**, which
// behaves identically on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Uniform index in [0, n). n must be > 0.
  size_t index(size_t n);

  // Derive an independent stream (e.g. one per training job).
  Rng fork();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
};

}  // namespace rtv

#pragma once

#include <cstdint>
#include <vector>

#include "mixvi/tensor.hpp"

namespace mixvi {

// Counter-based generator: every value is a pure function of
// (seed, stream, counter), so draws keyed by (seed, person, menu) are
// reproducible under any parallel schedule.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream) : key_(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ULL))) {}

  uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double normal();

  // Uniform integer on [0, n).
  int64_t uniform_int(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

  Tensor normal_tensor(std::vector<int64_t> shape);
  Tensor uniform_tensor(std::vector<int64_t> shape);

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

// Inverse standard normal CDF (Wichura's AS241 rational approximation,
// accurate to ~1e-15 on (0,1)).
double normal_icdf(double p);

// Scrambled Halton sequence: radical-inverse in the d-th prime base with a
// seeded digit permutation per dimension. Index 0 is the sequence start;
// callers normally skip a burn-in prefix.
class ScrambledHalton {
 public:
  ScrambledHalton(int dims, uint64_t seed);

  // Point `index` of the sequence, all dimensions, each in (0, 1).
  std::vector<double> point(uint64_t index) const;

  int dims() const { return dims_; }

 private:
  int dims_;
  std::vector<int> bases_;
  std::vector<std::vector<int>> perms_;  // per-dimension digit permutation, perm[0] == 0
};

// R x K matrix of draws: rows are quasi-random points mapped through the
// normal inverse CDF. `skip` leading points are discarded.
Tensor halton_normal_draws(int64_t r, int64_t k, uint64_t seed, uint64_t skip = 64);

}  // namespace mixvi

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace votepose {

// Bad configuration supplied by the caller (invalid sizes, mismatched shapes).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (files, images, labels).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invariant violation inside the library itself.
class InternalError : public std::runtime_error {
 public:
  explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic RNG used for every random choice in the library.
// splitmix64 core: portable and bit-reproducible across platforms, unlike
// the distributions in <random>.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, bound). bound == 0 returns 0.
  uint32_t bounded(uint32_t bound) {
    if (bound == 0) return 0;
    uint64_t m = (next_u64() >> 32) * uint64_t(bound);
    return uint32_t(m >> 32);
  }

  // Uniform double in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; no caching so the draw count stays predictable.
  double normal(double mean = 0.0, double sigma = 1.0);

 private:
  uint64_t state_;
};

// Derives an independent child seed from a master seed and a stream id.
uint64_t derive_seed(uint64_t master, uint64_t stream);

// Global worker count for parallel_for. 0 means hardware concurrency.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, so the
// callee may only write state owned by index i; results are then identical
// for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace votepose

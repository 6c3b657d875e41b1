#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace dermfuse {

// Deterministic random stream. All distributions are implemented by hand on
// top of the raw 64-bit generator so that a (seed, draw-sequence) pair yields
// the same values on every platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (trig form, spare cached).
  double normal();
  double normal(double mean, double stddev);
  // Uniform integer in [0, n). n must be positive.
  int64_t below(int64_t n);
  // Gamma(shape) with unit scale, Marsaglia-Tsang.
  double gamma(double shape);
  // Beta(a, b) from two gamma draws.
  double beta(double a, double b);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (int64_t i = static_cast<int64_t>(items.size()) - 1; i > 0; --i) {
      const int64_t j = below(i + 1);
      std::swap(items[static_cast<size_t>(i)], items[static_cast<size_t>(j)]);
    }
  }

  // Derives an independent stream seed from a root seed and a path of
  // integers (splitmix64 chaining). Parallel and serial consumers that use
  // the same (seed, path) get the same stream.
  static uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> path);

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dermfuse

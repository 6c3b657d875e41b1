#include "dermfuse/rng.hpp"

#include <cmath>

#include "dermfuse/errors.hpp"

namespace dermfuse {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed) : state_(seed) {
  // Warm up so that small seeds do not produce near-zero first outputs.
  (void)splitmix64(state_);
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(kTwoPi * u2);
  has_spare_ = true;
  return r * std::cos(kTwoPi * u2);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

int64_t Rng::below(int64_t n) {
  if (n <= 0) throw ConfigError("Rng::below: n must be positive");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return static_cast<int64_t>(v % un);
}

double Rng::gamma(double shape) {
  if (shape <= 0.0) throw ConfigError("Rng::gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost to shape+1 and scale back.
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

uint64_t Rng::derive(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t x = seed;
  (void)splitmix64(x);
  for (uint64_t p : path) {
    x ^= p + 0x9e3779b97f4a7c15ULL + (x << 6) + (x >> 2);
    (void)splitmix64(x);
  }
  return x;
}

}  // namespace dermfuse

#include "l2s/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace l2s {

double Rng::uniform_open() {
  for (;;) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x < limit) return x % n;
  }
}

double Rng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gumbel() { return gumbel_from_uniform(uniform_open()); }

Rng Rng::split() {
  // SplitMix64 finalizer so children of nearby seeds do not correlate.
  std::uint64_t z = engine_() + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Rng(z ^ (z >> 31));
}

double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

DenseVector gumbel_sample(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("gumbel_sample: n must be >= 1");
  DenseVector g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = rng.gumbel();
  return g;
}

}  // namespace l2s

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "l2s/tensor.hpp"

namespace l2s {

/// Seeded generator with a platform-independent stream. The engine is
/// mt19937_64, whose output sequence is fixed by the standard; every
/// derived distribution is computed here rather than through <random>
/// distributions, which are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1); exact zero is rejected.
  double uniform_open();

  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  double gumbel();

  /// Independent child stream; advances this stream by one draw.
  Rng split();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

/// -log(-log(u)) for u in (0, 1).
double gumbel_from_uniform(double u);

/// n i.i.d. Gumbel(0, 1) draws.
DenseVector gumbel_sample(Rng& rng, std::size_t n);

}  // namespace l2s

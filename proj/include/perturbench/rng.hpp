#pragma once

#include <cstdint>

namespace pbench {

/// Deterministic PRNG with hand-rolled samplers.
///
/// std::<random> distributions are implementation-defined, so seeded outputs
/// differ across standard libraries. Report and synthetic-data determinism
/// requires the whole sampling stack to be ours: splitmix64 core, Box-Muller
/// normals, Marsaglia-Tsang gamma, Knuth / transformed-rejection Poisson.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  /// Derives an independent stream, e.g. one per cell: Rng(seed).stream(i).
  Rng stream(uint64_t index) const;

  uint64_t next_u64();

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on [0, 1]; never returns exactly 0 (safe for log()).
  double uniform_pos();
  /// Integer uniform on [0, n).
  uint64_t uniform_int(uint64_t n);

  double normal();                       // standard normal
  double gamma(double shape);            // Gamma(shape, scale=1), shape > 0
  int64_t poisson(double mean);          // mean >= 0
  bool bernoulli(double p);

  /// Fisher-Yates shuffle of [0, n) index vector semantics.
  template <typename T>
  void shuffle(T* data, size_t n) {
    for (size_t i = n; i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      T tmp = data[i - 1];
      data[i - 1] = data[j];
      data[j] = tmp;
    }
  }

 private:
  uint64_t state_;
};

/// splitmix64 finalizer; used to mix seeds with stream indices.
uint64_t mix64(uint64_t x);

}  // namespace pbench

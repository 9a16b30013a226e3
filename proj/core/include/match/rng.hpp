#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace match {

/// Seeded random source. Every draw is derived from mt19937_64 output with
/// hand-written transforms, so sequences are identical across standard
/// library implementations (std:: distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Uniform double in [0, 1).
  double uniform01();

  double normal();

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  /// Derive an independent child stream; used to give each subsystem its
  /// own sequence from a single run seed.
  Rng fork(std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace match

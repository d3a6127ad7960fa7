#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace megloc {

/// splitmix64 finalizer. Used for seeding and for deriving child seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives a deterministic child seed from a parent seed and a path of indices,
/// e.g. derive_seed(seed, {condition, trial}).
std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> path);

/// xoshiro256** 1.0 (Blackman & Vigna), state expanded from a 64-bit seed with
/// splitmix64. Every randomized operation in the library draws from this
/// generator so that outputs depend only on the seed, never on the standard
/// library's distribution implementations.
///
/// Uniform doubles take the top 53 bits. Normals use the Box-Muller transform
/// and cache the second variate.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next(); }
  std::uint64_t next();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal.
  double normal();

  /// Fisher-Yates with below(); platform independent unlike std::shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace megloc

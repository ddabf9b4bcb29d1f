#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Core>

namespace vopr {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a root
/// seed and a counter, so tuple i of a dataset can be generated without
/// touching tuples 0..i-1.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  return mix64(mix64(root) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Small counter-based generator (SplitMix64). Satisfies
/// UniformRandomBitGenerator; the helpers below avoid std distributions so
/// sampled values do not depend on the standard library implementation.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (one draw per call).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Exponential(1).
  double exponential() noexcept {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -std::log(u);
  }

  /// Inverse-CDF draw from a nonnegative weight vector. Entries with zero
  /// weight are never returned.
  Eigen::Index categorical(const Eigen::Ref<const Eigen::VectorXd>& weights) noexcept {
    const double total = weights.sum();
    const double target = uniform() * total;
    double acc = 0.0;
    Eigen::Index last_positive = 0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last_positive = i;
      acc += weights[i];
      if (target < acc) return i;
    }
    return last_positive;
  }

 private:
  std::uint64_t state_;
};

}  // namespace vopr

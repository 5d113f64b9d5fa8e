#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace roadtopics {

/// xoshiro256** generator. Every random quantity in the library is drawn
/// from an explicitly seeded instance; there is no global engine.
///
/// `Rng::stream(seed, a, b, c)` derives an independent stream from a
/// counter tuple, so per-(iteration, document) draws are identical no
/// matter which thread or in which order they are consumed.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()();

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  double normal(double mean = 0.0, double sd = 1.0);
  /// log of a Gamma(shape, 1) draw; stable for tiny shapes.
  double log_gamma_draw(double shape);
  double gamma(double shape);
  double beta(double a, double b);
  bool bernoulli(double p);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Dirichlet draw, computed in log space and floored at 1e-300 so every
  /// component stays strictly positive.
  std::vector<double> dirichlet(std::span<const double> params);
  void dirichlet(std::span<const double> params, std::span<double> out);

  /// Index drawn proportionally to non-negative `weights`.
  std::size_t categorical(std::span<const double> weights);
  /// Index drawn proportionally to exp(`log_weights`).
  std::size_t categorical_log(std::span<const double> log_weights);

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix_keys(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c);

}  // namespace roadtopics

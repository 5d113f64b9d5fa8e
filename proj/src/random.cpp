#include "roadtopics/random.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace roadtopics {

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_keys(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
  std::uint64_t h = seed;
  std::uint64_t out = splitmix64(h);
  for (std::uint64_t key : {a, b, c}) {
    h ^= key + 0x632BE59BD9B4E019ULL + (out << 6) + (out >> 2);
    out = splitmix64(h);
  }
  return out;
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t st = seed;
  for (auto& s : s_) s = splitmix64(st);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                std::uint64_t c) {
  return Rng(mix_keys(seed, a, b, c));
}

Rng::result_type Rng::operator()() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return (static_cast<double>((*this)() >> 12) + 0.5) * 0x1.0p-52;
}

double Rng::normal(double mean, double sd) {
  // Marsaglia polar method, one value per call.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return mean + sd * u * std::sqrt(-2.0 * std::log(s) / s);
}

double Rng::log_gamma_draw(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma shape must be > 0");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    std::gamma_distribution<double> g(shape + 1.0, 1.0);
    return std::log(g(*this)) + std::log(uniform_open()) / shape;
  }
  std::gamma_distribution<double> g(shape, 1.0);
  return std::log(g(*this));
}

double Rng::gamma(double shape) { return std::exp(log_gamma_draw(shape)); }

double Rng::beta(double a, double b) {
  const double la = log_gamma_draw(a);
  const double lb = log_gamma_draw(b);
  const double m = std::max(la, lb);
  const double ea = std::exp(la - m);
  const double eb = std::exp(lb - m);
  return ea / (ea + eb);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below(0)");
  // Lemire's nearly-divisionless bounded draw.
  __uint128_t m = static_cast<__uint128_t>((*this)()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<__uint128_t>((*this)()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

void Rng::dirichlet(std::span<const double> params, std::span<double> out) {
  if (params.size() != out.size())
    throw std::invalid_argument("dirichlet: size mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out[i] = log_gamma_draw(params[i]);
    mx = std::max(mx, out[i]);
  }
  double total = 0.0;
  for (double& x : out) {
    x = std::exp(x - mx);
    total += x;
  }
  for (double& x : out) x = std::max(x / total, 1e-300);
}

std::vector<double> Rng::dirichlet(std::span<const double> params) {
  std::vector<double> out(params.size());
  dirichlet(params, out);
  return out;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::domain_error("categorical: zero total weight");
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  // Rounding fell off the end; return the last positive entry.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double w : log_weights) mx = std::max(mx, w);
  if (!std::isfinite(mx)) throw std::domain_error("categorical_log: no finite weight");
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - mx);
  return categorical(w);
}

}  // namespace roadtopics

#include "fedidm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fedidm {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr double kTwoPi = 6.283185307179586476925287;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double Rng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::next_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  // Reject draws below 2^64 mod n so the remainder is unbiased.
  const std::uint64_t cutoff = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= cutoff) return x % n;
  }
}

double Rng::normal() {
  const double u1 = next_open();
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost a draw with shape+1 down; keeps the stream deterministic.
    const double u = next_open();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = next_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

std::vector<double> Rng::dirichlet(double concentration, std::size_t k) {
  if (!(concentration > 0.0)) throw std::invalid_argument("dirichlet: concentration must be positive");
  if (k == 0) throw std::invalid_argument("dirichlet: k must be positive");
  std::vector<double> out(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = gamma(concentration);
    sum += out[i];
  }
  if (sum <= 0.0) {
    // All draws underflowed (tiny concentration); fall back to uniform.
    for (auto& p : out) p = 1.0 / static_cast<double>(k);
    return out;
  }
  for (auto& p : out) p /= sum;
  return out;
}

Rng Rng::child(std::uint64_t tag) const {
  return Rng(mix64(mix64(seed_ + kGolden) ^ mix64(tag ^ 0xD6E8FEB86659FD93ULL)));
}

}  // namespace fedidm

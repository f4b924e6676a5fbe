#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace fedidm {

/// Deterministic counter-based generator (splitmix64). A given seed yields
/// the same stream on every platform; transformed draws (normal, gamma)
/// are reproducible to the precision of the host libm.
///
/// Not thread-safe: one owner per instance. Derive independent streams
/// with child() instead of sharing.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed), seed_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53 bits.
  double next_double();
  /// Uniform in (0, 1]; safe to pass to log().
  double next_open();
  double uniform(double lo, double hi);
  /// Unbiased uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal (Box-Muller, two draws per call, no cached spare).
  double normal();
  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);
  double beta(double a, double b);
  std::vector<double> dirichlet(double concentration, std::size_t k);

  /// Independent stream derived from this generator's seed and a tag.
  /// Unaffected by draws already made on the parent.
  Rng child(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  std::uint64_t seed_;
};

}  // namespace fedidm

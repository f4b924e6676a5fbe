#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "fedidm/linalg.hpp"
#include "fedidm/rng.hpp"

namespace fedidm {

struct Example {
  Vec x;
  int y = 0;
};

struct Dataset {
  std::vector<Example> points;
  int k_classes = 0;
  int input_dim = 0;
};

/// Synthetic class blobs: unit-variance Gaussians around deterministic
/// per-class means placed at pairwise distance >= separation. Points are
/// ordered class-major; exactly n_per_class per class.
Dataset gen_blobs(int k_classes, int input_dim, int n_per_class, double separation, Rng& rng);

struct Partition {
  std::vector<std::vector<std::size_t>> client_shards;  // sorted indices into the dataset
  double concentration = 0.0;
};

/// Non-IID split: per class, client proportions drawn from a symmetric
/// Dirichlet. Every client ends up non-empty (a point is moved from the
/// largest shard if needed). Shards are disjoint and cover the dataset.
Partition dirichlet_partition(const Dataset& ds, int n_clients, double concentration, Rng& rng);

struct AugmentConfig {
  double sigma = 0.3;       // Gaussian jitter scale, sized against unit blob scatter
  double mask_prob = 0.1;   // per-coordinate zero-mask probability
};

/// Jitter then mask, so E[augment(x)] = (1 - mask_prob) * x coordinate-wise.
Vec augment(const Vec& x, Rng& rng, const AugmentConfig& cfg);

struct AugmentedPair {
  Vec s1;
  Vec s2;
};

AugmentedPair augment_pair(const Vec& x, Rng& rng, const AugmentConfig& cfg);

struct MixupResult {
  Vec x;
  Vec y;
};

/// Convex blend of two points and their label distributions.
MixupResult mixup_with_rho(const Vec& si, const Vec& sj, const Vec& yi, const Vec& yj, double rho);
/// Same, with rho ~ Beta(alpha, alpha).
MixupResult mixup(const Vec& si, const Vec& sj, const Vec& yi, const Vec& yj, Rng& rng,
                  double alpha = 0.75);

/// CSV round-trip. First line carries "<dim>,<k_classes>"; each row is
/// x_0,...,x_{dim-1},label.
void write_dataset_csv(const Dataset& ds, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

}  // namespace fedidm

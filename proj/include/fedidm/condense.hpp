#pragma once

#include <span>

#include "fedidm/data.hpp"
#include "fedidm/net.hpp"

namespace fedidm {

/// A client's synthetic stand-in for its shard: ipc points per class that
/// the shard actually covers. Labels are assigned at init and never change
/// during optimisation.
struct CondensedSet {
  std::vector<Example> points;
  int ipc = 0;
  int round_tag = 0;
};

struct DmConfig {
  int ipc = 10;
  int steps = 50;
  int n_random_nets = 4;
  double lr_s = 0.1;
  double upsilon = 0.1;  // weight of the cross-entropy regulariser
};

/// Distribution-matching loss for one sampled feature net: the summed
/// squared gap between per-class embedding means of the real shard and of
/// S, plus upsilon times the mean cross-entropy of S under the classifier.
/// A class present on exactly one side is an error; absent from both, it
/// is skipped.
double dm_loss(std::span<const Example> real, const CondensedSet& s, const RandomFeatureNet& phi,
               const NetSpec& clf_spec, const NetParams& clf, double upsilon);

/// Exact gradient of dm_loss with respect to every synthetic coordinate,
/// for one fixed feature net. Ordered like s.points.
std::vector<Vec> dm_loss_grads(std::span<const Example> real, const CondensedSet& s,
                               const RandomFeatureNet& phi, const NetSpec& clf_spec,
                               const NetParams& clf, double upsilon);

/// One synthetic-coordinate gradient step: the embedding-gap gradient is
/// averaged over n_random_nets freshly sampled feature nets, the CE term
/// contributes once, and every point moves by -lr_s times its gradient.
CondensedSet condense_step(const CondensedSet& s, std::span<const Example> real, Rng& rng,
                           const DmConfig& cfg, const NetSpec& phi_spec, const NetSpec& clf_spec,
                           const NetParams& clf);

/// Initialise from random real points per covered class, then run
/// cfg.steps condense_step iterations.
CondensedSet generate_condensed(std::span<const Example> real, const DmConfig& cfg, Rng& rng,
                                const NetSpec& phi_spec, const NetSpec& clf_spec,
                                const NetParams& clf, int round_tag);

}  // namespace fedidm

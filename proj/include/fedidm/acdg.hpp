#pragma once

#include <span>

#include "fedidm/condense.hpp"
#include "fedidm/data.hpp"
#include "fedidm/net.hpp"

namespace fedidm {

/// A condensed point pooled on the server, with provenance for auditing.
struct PooledPoint {
  Vec x;
  int y = 0;       // claimed label (possibly adversarial)
  int round = 0;   // round the owning set was produced in
  int client = 0;
  int index = 0;   // position inside that client's set
};

struct AcdgConfig {
  int delta_window = 3;    // how many recent rounds feed the pool
  double tau = 0.5;        // contrastive temperature
  int epochs_rect = 5;     // rectifier passes (one EM step each)
  double rect_lr = 0.5;    // step size applied to the mean-scaled gradient
  AugmentConfig aug;
  double mix_alpha = 0.75;
  double eps_resp = 1e-8;  // component mass below this keeps previous params
};

struct Pooled {
  std::vector<PooledPoint> pool;  // m points, deterministic order
  std::vector<Vec> views;         // 2m augmented views, pairs interleaved
};

/// Union of the last `delta` rounds of condensed sets (round ascending,
/// client ascending, point ascending), each point augmented twice.
Pooled pool_and_augment(const std::vector<std::vector<CondensedSet>>& history, int delta,
                        Rng& rng, const AugmentConfig& aug);

/// Mixture over embedding space with one scalar variance per component.
struct GmmParams {
  std::vector<Vec> mu;
  Vec sigma;  // scalarised variances, floored at 1e-6
  Vec pi;     // mixing weights; tracked for diagnostics only
};

struct GmmStep {
  GmmParams params;
  std::vector<bool> updated;  // false where mass fell below eps_resp
};

/// One prediction-guided EM step: classifier outputs replace posterior
/// responsibilities. Components with almost no mass keep `prev` values.
GmmStep guided_em_step(std::span<const Vec> embeddings, std::span<const Vec> predictions,
                       const GmmParams& prev, double eps_resp);

/// Fallback initialisation: every component at the global mean/variance.
GmmParams gmm_from_global(std::span<const Vec> embeddings, std::size_t k);

/// Softmax over -||r - mu_k||^2 / (2 sigma_k); mixing weights do not enter.
Vec posterior_row(const Vec& r, const GmmParams& gmm);
/// Same computation from precomputed squared distances (exposed for tests).
Vec gamma_from_sqdist(const Vec& sqdist, const Vec& sigma);

struct CleanlinessScores {
  Vec beta;          // per-point posterior of the higher-mean component
  double mean[2];    // fitted component means, [0] low / [1] high
  double var[2];
  double weight[2];
  bool degenerate = false;  // all inputs identical: beta forced to 1
};

/// Two-component 1-D EM on the gamma values at the claimed labels.
/// Initialised at the 25th/75th percentiles; stops on relative
/// log-likelihood change < 1e-6 or after 100 iterations.
CleanlinessScores fit_cleanliness(const Vec& values);

struct SoftPair {
  Vec y1;
  Vec y2;
};

/// Blend of the claimed one-hot and the net's own prediction per view:
/// y_v = beta * onehot(claimed) + (1 - beta) * h(view_v).
SoftPair relabel(int claimed, double beta, const Vec& h1, const Vec& h2, std::size_t k);

/// Pre-drawn mixup randomness so a loss evaluation is a pure function of
/// the parameters (finite-difference checks rely on this).
struct MixupPlan {
  std::vector<std::size_t> partner;
  Vec rho;
};

MixupPlan make_mixup_plan(std::size_t m, Rng& rng, double alpha);

struct RectLoss {
  double total = 0;
  double ce = 0;
  double ctr = 0;
  double mix = 0;
  RectifierGrads grads;  // gradient of the summed (not averaged) loss
};

/// Cross-pair CE + InfoNCE (negatives are the other pooled points'
/// embeddings) + mixup CE. Sums over points; needs at least two points.
RectLoss rectifier_loss(const RectifierNet& net, std::span<const PooledPoint> pool,
                        std::span<const Vec> views, std::span<const SoftPair> labels, double tau,
                        const MixupPlan& plan);

struct AuditEntry {
  int round = 0;
  long point_id = 0;
  int claimed = 0;
  int pseudo = 0;
  double beta = 1.0;
};

struct AcdgRound {
  std::vector<PooledPoint> pool;
  std::vector<Vec> soft_pseudo;   // classifier distribution per pooled point
  std::vector<int> pseudo;        // argmax labels (ties to lowest class)
  Vec beta;
  std::vector<AuditEntry> audit;  // one entry per pooled point
  std::size_t n_changed = 0;      // pseudo != claimed
};

/// One server-side rectification round: pool + augment, then per epoch one
/// guided EM step, cleanliness scoring, relabeling and a rectifier update.
/// gmm carries state across rounds (pass a default-constructed one first).
AcdgRound run_acdg_round(const std::vector<std::vector<CondensedSet>>& history,
                         RectifierNet& net, GmmParams& gmm, const AcdgConfig& cfg, int round,
                         Rng& rng);

}  // namespace fedidm

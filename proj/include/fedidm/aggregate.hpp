#pragma once

#include <deque>
#include <span>
#include <string>

#include "fedidm/data.hpp"
#include "fedidm/net.hpp"
#include "fedidm/rng.hpp"

namespace fedidm {

// ---- baseline rules ----

/// Weighted mean of the updates.
Vec fedavg(std::span<const Vec> updates, std::span<const double> weights);

/// Krum score = sum of squared distances to the n - f - 2 nearest others;
/// averages the multi_k lowest-scoring updates (ties by client index).
Vec multi_krum(std::span<const Vec> updates, int f, int multi_k);
/// The selection step alone, exposed for Bulyan and the attack oracles.
std::vector<std::size_t> multi_krum_select(std::span<const Vec> updates, int f, int multi_k);

/// Per coordinate, drops the floor(b*n) smallest and largest values.
Vec trimmed_mean(std::span<const Vec> updates, double trim_fraction);

/// Iterated Krum selection down to n - 2f candidates, then per coordinate
/// the mean of the n - 4f values closest to the median.
Vec bulyan(std::span<const Vec> updates, int f);
std::vector<std::size_t> bulyan_select(std::span<const Vec> updates, int f);

/// Trust = max(0, cos(g_i, g_s)); inputs rescaled to the server norm and
/// combined by normalized trust. All trust zero: returns the zero update.
Vec fltrust_like(std::span<const Vec> updates, const Vec& server_update);

// ---- FedIDM robust aggregation ----

/// Last `capacity` global updates, oldest first.
struct UpdateHistory {
  explicit UpdateHistory(std::size_t capacity) : capacity(capacity) {}
  void push(Vec g) {
    entries.push_back(std::move(g));
    if (entries.size() > capacity) entries.pop_front();
  }
  std::size_t size() const { return entries.size(); }
  /// j = 0 is the most recent round.
  const Vec& newest(std::size_t j) const { return entries.at(entries.size() - 1 - j); }

  std::size_t capacity;
  std::deque<Vec> entries;
};

struct RaConfig {
  double lambda = 0.5;     // decay for the history-corrected update
  int delta_hist = 5;      // memory pool depth
  int k_top = -1;          // highest-loss rejections; -1 resolves to ceil(0.1*candidates)
  double ell_o = -1.0;     // loss bound; <= 0 resolves to 1.25x the current model's loss
  double dbscan_eps = 0.05;
  double eta = 1.0;        // global learning rate
};

struct ClientRecord {
  int client_id = 0;
  double alpha = 0.0;
  double norm_before = 0.0;        // raw update norm
  double norm_after = -1.0;        // after magnitude adjustment; -1 when never adjusted
  double loss = -1.0;              // candidate loss; -1 when never evaluated
  bool kept = false;
  std::string reason;              // negative_contribution | cluster_dedup | loss_reject
  Vec corrected;
};

struct ContributionReport {
  std::vector<ClientRecord> clients;
  Vec g_s;
  double model_loss = -1.0;        // loss of w itself on the eval set
  double ell_o_used = -1.0;
  int k_top_used = 0;
};

/// g' = lambda * norm(g) + sum_j lambda^(j+1) * norm(g_hist_j), newest first,
/// over however much history exists.
Vec correct_update(const Vec& g, const UpdateHistory& history, double lambda);

/// Cosine of the corrected update against the server base update.
double contribution(const Vec& corrected, const Vec& g_s);

/// 1-D DBSCAN with min_samples = 1 over the alpha values: clusters are the
/// eps-gap chains; one uniformly random representative per cluster. Returns
/// positions into `alphas`, ascending.
std::vector<std::size_t> dedup_by_contribution(const Vec& alphas, double eps, Rng& rng);

/// Rescales every vector to the median of raw_norms (the positive-alpha
/// clients' original norms); directions are preserved. Returns the median.
double magnitude_adjust(std::vector<Vec>& corrected, const Vec& raw_norms);

/// Mean CE on the evaluation set after taking the step w - eta * g.
double candidate_loss(const Vec& w, const Vec& g, double eta, const NetSpec& spec,
                      std::span<const Example> eval_set);

/// Contribution-weighted mean of the survivors.
Vec weighted_aggregate(std::span<const Vec> updates, std::span<const double> alphas);

/// w - eta * g.
Vec apply_global(const Vec& w, const Vec& g, double eta);

/// The full pipeline: correct, score, reject non-positive contributions,
/// deduplicate by contribution, rescale to the median raw norm, reject the
/// highest-loss candidates, weight-average. The report is always filled,
/// also when every update is rejected and the round must be skipped.
Vec fedidm_aggregate(std::span<const Vec> updates, const UpdateHistory& history, const Vec& g_s,
                     const Vec& w, const NetSpec& spec, std::span<const Example> eval_set,
                     const RaConfig& cfg, Rng& rng, ContributionReport& report);

/// CSV lines `round,client_id,alpha,norm_before,norm_after,loss,decision,reason`
/// (no header), one per client.
std::string contribution_csv(const ContributionReport& report, int round);
std::string contribution_csv_header();

}  // namespace fedidm

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedidm/acdg.hpp"
#include "fedidm/aggregate.hpp"
#include "fedidm/attacks.hpp"
#include "fedidm/condense.hpp"

namespace fedidm {

struct DataConfig {
  int k_classes = 4;
  int input_dim = 16;
  int points_per_class = 200;
  double separation = 6.0;
  double concentration = 0.5;      // dirichlet non-iid strength
  int test_points_per_class = 50;
  int root_points_per_class = 10;  // server-held sample backing fltrust
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {32};       // global classifier hidden widths
  std::vector<std::size_t> phi = {32, 16};      // random feature net, input prepended
  std::vector<std::size_t> rect_hidden = {32};  // rectifier encoder
  std::size_t embed_dim = 8;
};

struct SimConfig {
  int n_clients = 20;
  int clients_per_round = 20;
  int total_rounds = 60;
  int stage_switch = 15;  // last condensation round; aggregation starts after it
  int local_epochs = 1;
  double local_lr = 0.1;
  int local_batch = 32;
  std::uint64_t seed = 1;
  std::string aggregator = "fedidm";
  bool acdg_enabled = true;     // off: pooled labels are taken as claimed
  bool ra_enabled = true;       // off: plain mean of the corrected updates
  int krum_f = -1;              // -1 resolves from the malicious fraction, capped to (n-3)/2
  int multi_k = -1;             // -1 resolves to n - f - 2
  int bulyan_f = -1;            // -1 resolves like krum_f, capped to (n-3)/4
  double trim_fraction = 0.25;  // trimmed-mean b
  AttackConfig attack;
  RaConfig ra;
  DmConfig dm;
  AcdgConfig acdg;
  DataConfig data;
  ModelConfig model;
};

/// Canonical aggregator ordering used by the report tables.
const std::vector<std::string>& aggregator_names();

/// Rejects out-of-range fields with invalid_argument before any compute.
void validate(const SimConfig& cfg);

struct RoundRecord {
  int round = 0;      // 1-based
  std::string stage;  // ACDG | RA
  bool adversarial = false;
  double ter = 0.0;
  int accepted = 0;
  int rejected_negative = 0;
  int rejected_cluster = 0;
  int rejected_loss = 0;
  bool skipped = false;  // every update was rejected; the model did not move
};

struct MetricSummary {
  double final_ter = 0.0;
  std::vector<double> ter_series;
  // Rectification quality over the adversarial condensation rounds. Absent
  // when nothing was flipped (rsr, fnr) or no pool was audited (fpr).
  std::optional<double> rsr;
  std::optional<double> fnr;
  std::optional<double> fpr;
};

struct ExperimentResult {
  std::vector<RoundRecord> rounds;
  MetricSummary metrics;
  std::string rounds_csv;         // header + one line per round
  std::string contributions_csv;  // per-client audit of the fedidm rounds, else empty
};

/// Uniformly random subset of {1..total_rounds} of size
/// round(fraction * total_rounds). Flags are indexed by round; [0] is unused.
std::vector<bool> schedule_adversarial(int total_rounds, double fraction, Rng& rng);

/// Mini-batch SGD from the flattened weights; returns w - w_after, which is
/// already scaled by the learning rate. Zero epochs or zero lr give the zero
/// update.
Vec local_train(std::span<const Example> shard, const NetSpec& spec, const Vec& w, int epochs,
                double lr, int batch, Rng& rng);

/// Fraction of test points whose argmax prediction is wrong (argmax ties go
/// to the lowest class index).
double compute_ter(const NetSpec& spec, const Vec& w, std::span<const Example> test);

struct RectCounts {
  long flipped = 0;        // claimed differs from the true label
  long recovered = 0;      // flipped and the pseudo-label matches the truth
  long clean = 0;
  long clean_changed = 0;  // clean but relabeled anyway
};

/// Tallies one round's pool against the true labels (aligned with the pool).
RectCounts tally_rectification(const AcdgRound& acdg, std::span<const int> true_labels);

/// RSR = recovered / flipped and FNR = 1 - RSR, absent when nothing was
/// flipped; FPR = clean_changed / clean over the clean points alone.
void compute_rectification_metrics(const RectCounts& counts, MetricSummary& out);

ExperimentResult run_experiment(const SimConfig& cfg);

}  // namespace fedidm

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "fedidm/condense.hpp"
#include "fedidm/linalg.hpp"
#include "fedidm/net.hpp"

namespace fedidm {

enum class AttackKind { NONE, LIE, STAT_OPT, DYN_OPT, SLF, DLF };

std::string attack_name(AttackKind kind);
AttackKind attack_from_name(const std::string& name);  // throws on unknown names

struct AttackConfig {
  AttackKind kind = AttackKind::NONE;
  double malicious_fraction = 0.5;         // capped at half the clients
  double adversarial_round_fraction = 0.5;
  double gamma_init = 10.0;                // search start for the OPT attacks
  int halving_steps = 20;
  bool stat_literal = false;               // -gamma*omega instead of mean + gamma*omega
  bool dyn_use_std = false;                // omega from the coordinate stds
  std::optional<double> z_override;        // fixes LIE's z when set
};

/// What the adversary can see: every honest update this round plus their
/// mean and coordinate-wise (population) standard deviation.
struct BenignView {
  std::vector<Vec> updates;
  Vec mean;
  Vec stddev;
};

BenignView make_benign_view(std::span<const Vec> updates);

/// True when the candidate update would be retained by the rule under
/// attack; the OPT searches probe this.
using AcceptanceOracle = std::function<bool(const Vec&)>;

/// z from the malicious/benign client ratio via the normal quantile.
double lie_z(int n_total, int n_malicious);

/// All malicious clients submit mean + z * stddev.
Vec lie(const BenignView& view, int n_total, int n_malicious,
        std::optional<double> z_override = std::nullopt);

struct CraftResult {
  Vec update;
  double gamma = 0.0;
  bool exhausted = false;  // no tested gamma was accepted; update is the benign mean
};

/// Static direction omega = -sign(mean). Tries gamma_init, then halves,
/// keeping the first (largest) accepted gamma. `literal` switches the
/// candidate from mean + gamma*omega to the bare -gamma*omega form.
CraftResult stat_opt(const BenignView& view, const AcceptanceOracle& accepted,
                     double gamma_init, int halving_steps, bool literal = false);

/// Dynamic direction: unit vector against the mean (default) or against
/// the coordinate stds. gamma maximised by bisection on [0, gamma_init].
CraftResult dyn_opt(const BenignView& view, const AcceptanceOracle& accepted,
                    double gamma_init, int halving_steps, bool use_std_direction = false);

/// Static label flip y -> k - 1 - y.
int slf_label(int y, int k);
void slf(CondensedSet& set, int k);

/// Dynamic flip to the surrogate's least likely class (ties to the lowest
/// index); features are left untouched.
void dlf(CondensedSet& set, const NetSpec& surrogate_spec, const NetParams& surrogate);

}  // namespace fedidm

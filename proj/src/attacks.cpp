#include "fedidm/attacks.hpp"

#include <cmath>
#include <stdexcept>

namespace fedidm {

std::string attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::NONE: return "NONE";
    case AttackKind::LIE: return "LIE";
    case AttackKind::STAT_OPT: return "STAT_OPT";
    case AttackKind::DYN_OPT: return "DYN_OPT";
    case AttackKind::SLF: return "SLF";
    case AttackKind::DLF: return "DLF";
  }
  throw std::logic_error("attack_name: unreachable");
}

AttackKind attack_from_name(const std::string& name) {
  if (name == "NONE") return AttackKind::NONE;
  if (name == "LIE") return AttackKind::LIE;
  if (name == "STAT_OPT") return AttackKind::STAT_OPT;
  if (name == "DYN_OPT") return AttackKind::DYN_OPT;
  if (name == "SLF") return AttackKind::SLF;
  if (name == "DLF") return AttackKind::DLF;
  throw std::invalid_argument("unknown attack: " + name);
}

BenignView make_benign_view(std::span<const Vec> updates) {
  if (updates.empty()) throw std::invalid_argument("make_benign_view: no updates");
  const std::size_t d = updates[0].size();
  for (const Vec& u : updates)
    if (u.size() != d) throw std::invalid_argument("make_benign_view: ragged updates");
  BenignView view;
  view.updates.assign(updates.begin(), updates.end());
  view.mean.assign(d, 0.0);
  for (const Vec& u : updates) vec_add_scaled(view.mean, u, 1.0 / updates.size());
  view.stddev.assign(d, 0.0);
  for (const Vec& u : updates)
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = u[j] - view.mean[j];
      view.stddev[j] += diff * diff / updates.size();
    }
  for (double& s : view.stddev) s = std::sqrt(s);
  return view;
}

double lie_z(int n_total, int n_malicious) {
  if (n_malicious < 1) throw std::invalid_argument("invalid LIE configuration");
  const int s = n_total / 2 + 1 - n_malicious;
  const int denom = n_total - n_malicious;
  if (denom <= 0) throw std::invalid_argument("invalid LIE configuration");
  const double p = static_cast<double>(n_total - n_malicious - s) / denom;
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("invalid LIE configuration");
  return inv_normal_cdf(p);
}

Vec lie(const BenignView& view, int n_total, int n_malicious,
        std::optional<double> z_override) {
  const double z = z_override ? *z_override : lie_z(n_total, n_malicious);
  Vec out = view.mean;
  vec_add_scaled(out, view.stddev, z);
  return out;
}

CraftResult stat_opt(const BenignView& view, const AcceptanceOracle& accepted,
                     double gamma_init, int halving_steps, bool literal) {
  if (!(gamma_init > 0.0) || halving_steps < 1)
    throw std::invalid_argument("stat_opt: bad search parameters");
  Vec omega(view.mean.size());
  for (std::size_t j = 0; j < omega.size(); ++j)
    omega[j] = view.mean[j] > 0.0 ? -1.0 : (view.mean[j] < 0.0 ? 1.0 : 0.0);

  auto candidate = [&](double gamma) {
    if (literal) {
      Vec u(omega.size());
      for (std::size_t j = 0; j < u.size(); ++j) u[j] = -gamma * omega[j];
      return u;
    }
    Vec u = view.mean;
    vec_add_scaled(u, omega, gamma);
    return u;
  };

  double gamma = gamma_init;
  for (int step = 0; step < halving_steps; ++step, gamma *= 0.5) {
    Vec u = candidate(gamma);
    if (accepted(u)) return CraftResult{std::move(u), gamma, false};
  }
  return CraftResult{view.mean, 0.0, true};
}

CraftResult dyn_opt(const BenignView& view, const AcceptanceOracle& accepted,
                    double gamma_init, int halving_steps, bool use_std_direction) {
  if (!(gamma_init > 0.0) || halving_steps < 1)
    throw std::invalid_argument("dyn_opt: bad search parameters");
  Vec omega = vec_scale(l2_normalize(use_std_direction ? view.stddev : view.mean), -1.0);

  auto candidate = [&](double gamma) {
    Vec u = view.mean;
    vec_add_scaled(u, omega, gamma);
    return u;
  };

  {
    Vec top = candidate(gamma_init);
    if (accepted(top)) return CraftResult{std::move(top), gamma_init, false};
  }
  double lo = 0.0, hi = gamma_init;
  bool any = false;
  for (int step = 0; step < halving_steps; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (accepted(candidate(mid))) {
      lo = mid;
      any = true;
    } else {
      hi = mid;
    }
  }
  return CraftResult{candidate(lo), lo, !any};
}

int slf_label(int y, int k) {
  if (y < 0 || y >= k) throw std::invalid_argument("slf_label: label out of range");
  return k - 1 - y;
}

void slf(CondensedSet& set, int k) {
  for (Example& e : set.points) e.y = slf_label(e.y, k);
}

void dlf(CondensedSet& set, const NetSpec& surrogate_spec, const NetParams& surrogate) {
  for (Example& e : set.points) {
    const Vec logits = forward(surrogate_spec, surrogate, e.x);
    std::size_t worst = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
      if (logits[c] < logits[worst]) worst = c;
    e.y = static_cast<int>(worst);
  }
}

}  // namespace fedidm

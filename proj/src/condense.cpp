#include "fedidm/condense.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

namespace fedidm {

namespace {

std::map<int, std::vector<std::size_t>> by_class(std::span<const Example> pts) {
  std::map<int, std::vector<std::size_t>> idx;
  for (std::size_t i = 0; i < pts.size(); ++i) idx[pts[i].y].push_back(i);
  return idx;
}

// Per-class embedding means under phi for both sides, validating coverage.
struct ClassGap {
  int cls;
  Vec mean_real;
  Vec mean_syn;
  std::vector<std::size_t> syn_idx;
};

std::vector<ClassGap> class_gaps(std::span<const Example> real, const CondensedSet& s,
                                 const RandomFeatureNet& phi) {
  const auto real_idx = by_class(real);
  const auto syn_idx = by_class(s.points);
  std::vector<ClassGap> gaps;
  std::map<int, bool> classes;
  for (const auto& kv : real_idx) classes[kv.first] = true;
  for (const auto& kv : syn_idx) classes[kv.first] = true;
  for (const auto& kv : classes) {
    const int c = kv.first;
    const bool in_real = real_idx.count(c) > 0;
    const bool in_syn = syn_idx.count(c) > 0;
    if (in_real != in_syn)
      throw std::invalid_argument("dm_loss: class " + std::to_string(c) +
                                  " present on exactly one side");
    ClassGap g;
    g.cls = c;
    const auto& ri = real_idx.at(c);
    const auto& si = syn_idx.at(c);
    g.syn_idx = si;
    g.mean_real.assign(phi.spec.output_dim(), 0.0);
    for (auto i : ri) vec_add_scaled(g.mean_real, features(phi, real[i].x), 1.0 / ri.size());
    g.mean_syn.assign(phi.spec.output_dim(), 0.0);
    for (auto i : si) vec_add_scaled(g.mean_syn, features(phi, s.points[i].x), 1.0 / si.size());
    gaps.push_back(std::move(g));
  }
  return gaps;
}

Vec onehot(int y, std::size_t k) {
  Vec t(k, 0.0);
  t[static_cast<std::size_t>(y)] = 1.0;
  return t;
}

}  // namespace

double dm_loss(std::span<const Example> real, const CondensedSet& s, const RandomFeatureNet& phi,
               const NetSpec& clf_spec, const NetParams& clf, double upsilon) {
  if (s.points.empty()) throw std::invalid_argument("dm_loss: empty condensed set");
  double loss = 0.0;
  for (const ClassGap& g : class_gaps(real, s, phi)) {
    const Vec d = vec_sub(g.mean_real, g.mean_syn);
    loss += dot(d, d);
  }
  if (upsilon != 0.0) {
    const std::size_t k = clf_spec.output_dim();
    double ce = 0.0;
    for (const Example& e : s.points) ce += ce_loss(forward(clf_spec, clf, e.x), onehot(e.y, k));
    loss += upsilon * ce / static_cast<double>(s.points.size());
  }
  return loss;
}

std::vector<Vec> dm_loss_grads(std::span<const Example> real, const CondensedSet& s,
                               const RandomFeatureNet& phi, const NetSpec& clf_spec,
                               const NetParams& clf, double upsilon) {
  if (s.points.empty()) throw std::invalid_argument("dm_loss_grads: empty condensed set");
  std::vector<Vec> grads(s.points.size(), Vec(s.points[0].x.size(), 0.0));

  for (const ClassGap& g : class_gaps(real, s, phi)) {
    // d||mr - ms||^2 / d phi(s_j) = 2 (ms - mr) / |S_c| for each j in class.
    Vec up = vec_sub(g.mean_syn, g.mean_real);
    for (auto& v : up) v *= 2.0 / static_cast<double>(g.syn_idx.size());
    for (auto j : g.syn_idx) {
      ForwardCache cache;
      forward(phi.spec, phi.params, s.points[j].x, &cache);
      const Vec gin = backprop(phi.spec, phi.params, cache, up, nullptr);
      vec_add_scaled(grads[j], gin, 1.0);
    }
  }

  if (upsilon != 0.0) {
    const std::size_t k = clf_spec.output_dim();
    const double w = upsilon / static_cast<double>(s.points.size());
    for (std::size_t j = 0; j < s.points.size(); ++j) {
      ForwardCache cache;
      const Vec logits = forward(clf_spec, clf, s.points[j].x, &cache);
      Vec up = ce_logit_grad(logits, onehot(s.points[j].y, k));
      for (auto& v : up) v *= w;
      const Vec gin = backprop(clf_spec, clf, cache, std::move(up), nullptr);
      vec_add_scaled(grads[j], gin, 1.0);
    }
  }
  return grads;
}

CondensedSet condense_step(const CondensedSet& s, std::span<const Example> real, Rng& rng,
                           const DmConfig& cfg, const NetSpec& phi_spec, const NetSpec& clf_spec,
                           const NetParams& clf) {
  if (s.points.empty()) throw std::invalid_argument("condense_step: empty condensed set");
  if (cfg.n_random_nets < 1) throw std::invalid_argument("condense_step: need at least one net");

  // The CE term reappears in every per-net gradient, so averaging over nets
  // weights it exactly once.
  std::vector<Vec> grads(s.points.size(), Vec(s.points[0].x.size(), 0.0));
  const double net_w = 1.0 / static_cast<double>(cfg.n_random_nets);
  for (int n = 0; n < cfg.n_random_nets; ++n) {
    const RandomFeatureNet phi = sample_feature_net(phi_spec, rng);
    const auto g = dm_loss_grads(real, s, phi, clf_spec, clf, cfg.upsilon);
    for (std::size_t j = 0; j < grads.size(); ++j) vec_add_scaled(grads[j], g[j], net_w);
  }

  CondensedSet out = s;
  for (std::size_t j = 0; j < out.points.size(); ++j) {
    check_finite(grads[j], "condensation gradient");
    vec_add_scaled(out.points[j].x, grads[j], -cfg.lr_s);
  }
  return out;
}

CondensedSet generate_condensed(std::span<const Example> real, const DmConfig& cfg, Rng& rng,
                                const NetSpec& phi_spec, const NetSpec& clf_spec,
                                const NetParams& clf, int round_tag) {
  if (real.empty()) throw std::invalid_argument("generate_condensed: empty shard");
  if (cfg.ipc < 1) throw std::invalid_argument("generate_condensed: ipc must be positive");

  CondensedSet s;
  s.ipc = cfg.ipc;
  s.round_tag = round_tag;
  for (const auto& kv : by_class(real)) {
    const auto& idx = kv.second;
    if (idx.size() >= static_cast<std::size_t>(cfg.ipc)) {
      std::vector<std::size_t> pick = idx;
      rng.shuffle(pick);
      for (int i = 0; i < cfg.ipc; ++i) s.points.push_back(real[pick[i]]);
    } else {
      // Thin class: sample with replacement so the set still carries ipc points.
      for (int i = 0; i < cfg.ipc; ++i)
        s.points.push_back(real[idx[rng.uniform_int(idx.size())]]);
    }
  }

  for (int step = 0; step < cfg.steps; ++step)
    s = condense_step(s, real, rng, cfg, phi_spec, clf_spec, clf);
  return s;
}

}  // namespace fedidm

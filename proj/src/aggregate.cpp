#include "fedidm/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace fedidm {

namespace {

void check_same_dim(std::span<const Vec> updates) {
  if (updates.empty()) throw std::invalid_argument("no updates");
  for (const Vec& u : updates)
    if (u.size() != updates[0].size()) throw std::invalid_argument("ragged updates");
}

// Krum scores over an index subset; neighbor count depends on the current
// pool size, which matters for Bulyan's shrinking pool.
std::vector<double> krum_scores(std::span<const Vec> updates,
                                const std::vector<std::size_t>& pool, int f) {
  const std::size_t m = pool.size();
  // Bulyan can shrink the pool below f + 3; score degenerates to 0 then.
  const std::size_t keep = m > static_cast<std::size_t>(f) + 2
                               ? m - static_cast<std::size_t>(f) - 2
                               : 0;
  std::vector<double> scores(m);
  for (std::size_t a = 0; a < m; ++a) {
    std::vector<double> d2;
    d2.reserve(m - 1);
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b) continue;
      const Vec d = vec_sub(updates[pool[a]], updates[pool[b]]);
      d2.push_back(dot(d, d));
    }
    std::sort(d2.begin(), d2.end());
    scores[a] = std::accumulate(d2.begin(), d2.begin() + keep, 0.0);
  }
  return scores;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

Vec fedavg(std::span<const Vec> updates, std::span<const double> weights) {
  check_same_dim(updates);
  if (weights.size() != updates.size()) throw std::invalid_argument("fedavg: weight arity");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("fedavg: negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("fedavg: weights sum to zero");
  Vec out(updates[0].size(), 0.0);
  for (std::size_t i = 0; i < updates.size(); ++i)
    vec_add_scaled(out, updates[i], weights[i] / total);
  return out;
}

std::vector<std::size_t> multi_krum_select(std::span<const Vec> updates, int f, int multi_k) {
  check_same_dim(updates);
  const int n = static_cast<int>(updates.size());
  if (f < 0) throw std::invalid_argument("multi_krum: negative f");
  if (n < 2 * f + 3) throw std::runtime_error("insufficient clients for Krum");
  if (multi_k < 1 || multi_k > n) throw std::invalid_argument("multi_krum: bad selection count");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  const std::vector<double> scores = krum_scores(updates, pool, f);
  std::vector<std::size_t> order = pool;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a < b;
  });
  std::vector<std::size_t> selected(order.begin(), order.begin() + multi_k);
  std::sort(selected.begin(), selected.end());
  return selected;
}

Vec multi_krum(std::span<const Vec> updates, int f, int multi_k) {
  const std::vector<std::size_t> sel = multi_krum_select(updates, f, multi_k);
  Vec out(updates[0].size(), 0.0);
  for (std::size_t i : sel) vec_add_scaled(out, updates[i], 1.0 / sel.size());
  return out;
}

Vec trimmed_mean(std::span<const Vec> updates, double trim_fraction) {
  check_same_dim(updates);
  if (trim_fraction < 0.0 || trim_fraction >= 0.5)
    throw std::invalid_argument("trimmed_mean: fraction outside [0, 0.5)");
  const std::size_t n = updates.size();
  const std::size_t t = static_cast<std::size_t>(trim_fraction * n);
  if (n <= 2 * t) throw std::runtime_error("trimmed_mean: nothing left after trimming");
  Vec out(updates[0].size(), 0.0);
  Vec col(n);
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = updates[i][j];
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (std::size_t i = t; i < n - t; ++i) s += col[i];
    out[j] = s / static_cast<double>(n - 2 * t);
  }
  return out;
}

std::vector<std::size_t> bulyan_select(std::span<const Vec> updates, int f) {
  check_same_dim(updates);
  const int n = static_cast<int>(updates.size());
  if (f < 0) throw std::invalid_argument("bulyan: negative f");
  if (n < 4 * f + 3) throw std::runtime_error("insufficient clients for Bulyan");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::size_t> selected;
  const std::size_t theta = static_cast<std::size_t>(n - 2 * f);
  while (selected.size() < theta) {
    const std::vector<double> scores = krum_scores(updates, pool, f);
    std::size_t best = 0;
    for (std::size_t a = 1; a < pool.size(); ++a) {
      if (scores[a] < scores[best] || (scores[a] == scores[best] && pool[a] < pool[best]))
        best = a;
    }
    selected.push_back(pool[best]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

Vec bulyan(std::span<const Vec> updates, int f) {
  const std::vector<std::size_t> sel = bulyan_select(updates, f);
  const std::size_t n = updates.size();
  const std::size_t beta = n - 4 * static_cast<std::size_t>(f);
  Vec out(updates[0].size(), 0.0);
  Vec col(sel.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (std::size_t a = 0; a < sel.size(); ++a) col[a] = updates[sel[a]][j];
    const double med = median_scalar(std::vector<double>(col.begin(), col.end()));
    // keep the beta values closest to the coordinate median, ties toward
    // the earlier selected client for determinism
    std::vector<std::size_t> order(sel.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double da = std::abs(col[a] - med), db = std::abs(col[b] - med);
      if (da != db) return da < db;
      return a < b;
    });
    double s = 0.0;
    for (std::size_t a = 0; a < beta; ++a) s += col[order[a]];
    out[j] = s / static_cast<double>(beta);
  }
  return out;
}

Vec fltrust_like(std::span<const Vec> updates, const Vec& server_update) {
  check_same_dim(updates);
  const double sn = l2_norm(server_update);
  if (sn == 0.0) throw std::invalid_argument("fltrust_like: zero server update");
  Vec out(server_update.size(), 0.0);
  double total = 0.0;
  std::vector<double> trust(updates.size(), 0.0);
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const double un = l2_norm(updates[i]);
    if (un == 0.0) continue;  // no direction, no trust
    trust[i] = std::max(0.0, cosine_similarity(updates[i], server_update));
    total += trust[i];
  }
  if (total == 0.0) return out;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (trust[i] == 0.0) continue;
    const double un = l2_norm(updates[i]);
    vec_add_scaled(out, updates[i], trust[i] / total * (sn / un));
  }
  return out;
}

Vec correct_update(const Vec& g, const UpdateHistory& history, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda outside (0,1)");
  Vec out = vec_scale(l2_normalize(g), lambda);
  double coef = lambda;
  for (std::size_t j = 0; j < history.size(); ++j) {
    coef *= lambda;  // lambda^(j+2) for the j-th newest entry
    vec_add_scaled(out, l2_normalize(history.newest(j)), coef);
  }
  return out;
}

double contribution(const Vec& corrected, const Vec& g_s) {
  if (l2_norm(g_s) == 0.0) throw std::runtime_error("base update degenerate");
  return cosine_similarity(corrected, g_s);
}

std::vector<std::size_t> dedup_by_contribution(const Vec& alphas, double eps, Rng& rng) {
  if (!(eps > 0.0)) throw std::invalid_argument("dedup: eps must be positive");
  if (alphas.empty()) return {};
  std::vector<std::size_t> order(alphas.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (alphas[a] != alphas[b]) return alphas[a] < alphas[b];
    return a < b;
  });
  std::vector<std::size_t> reps;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= order.size(); ++i) {
    if (i == order.size() || alphas[order[i]] - alphas[order[i - 1]] > eps) {
      const std::size_t len = i - start;
      reps.push_back(order[start + rng.uniform_int(len)]);
      start = i;
    }
  }
  std::sort(reps.begin(), reps.end());
  return reps;
}

double magnitude_adjust(std::vector<Vec>& corrected, const Vec& raw_norms) {
  if (raw_norms.empty()) throw std::invalid_argument("magnitude_adjust: no reference norms");
  const double target = median_scalar({raw_norms.begin(), raw_norms.end()});
  for (Vec& v : corrected) v = vec_scale(l2_normalize(v), target);
  return target;
}

double candidate_loss(const Vec& w, const Vec& g, double eta, const NetSpec& spec,
                      std::span<const Example> eval_set) {
  if (eval_set.empty()) throw std::invalid_argument("candidate_loss: empty evaluation set");
  const Vec stepped = apply_global(w, g, eta);
  const NetParams p = unflatten(spec, stepped);
  const std::size_t k = spec.output_dim();
  double total = 0.0;
  for (const Example& e : eval_set) {
    Vec target(k, 0.0);
    target.at(static_cast<std::size_t>(e.y)) = 1.0;
    total += ce_loss(forward(spec, p, e.x), target);
  }
  return total / static_cast<double>(eval_set.size());
}

Vec weighted_aggregate(std::span<const Vec> updates, std::span<const double> alphas) {
  check_same_dim(updates);
  if (alphas.size() != updates.size()) throw std::invalid_argument("weighted_aggregate: arity");
  double total = 0.0;
  for (double a : alphas) {
    if (!(a > 0.0)) throw std::invalid_argument("weighted_aggregate: non-positive alpha");
    total += a;
  }
  Vec out(updates[0].size(), 0.0);
  for (std::size_t i = 0; i < updates.size(); ++i)
    vec_add_scaled(out, updates[i], alphas[i] / total);
  return out;
}

Vec apply_global(const Vec& w, const Vec& g, double eta) {
  if (w.size() != g.size()) throw std::invalid_argument("apply_global: shape mismatch");
  Vec out = w;
  vec_add_scaled(out, g, -eta);
  return out;
}

Vec fedidm_aggregate(std::span<const Vec> updates, const UpdateHistory& history, const Vec& g_s,
                     const Vec& w, const NetSpec& spec, std::span<const Example> eval_set,
                     const RaConfig& cfg, Rng& rng, ContributionReport& report) {
  check_same_dim(updates);
  report = ContributionReport{};
  report.g_s = g_s;
  const std::size_t n = updates.size();
  report.clients.resize(n);

  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < n; ++i) {
    ClientRecord& rec = report.clients[i];
    rec.client_id = static_cast<int>(i);
    rec.norm_before = l2_norm(updates[i]);
    rec.corrected = correct_update(updates[i], history, cfg.lambda);
    rec.alpha = contribution(rec.corrected, g_s);
    if (rec.alpha > 0.0) {
      positive.push_back(i);
    } else {
      rec.kept = false;
      rec.reason = "negative_contribution";
    }
  }
  if (positive.empty()) throw std::runtime_error("all updates rejected");

  Vec pos_alphas(positive.size());
  for (std::size_t a = 0; a < positive.size(); ++a)
    pos_alphas[a] = report.clients[positive[a]].alpha;
  const std::vector<std::size_t> rep_pos =
      dedup_by_contribution(pos_alphas, cfg.dbscan_eps, rng);
  std::vector<bool> is_rep(positive.size(), false);
  for (std::size_t a : rep_pos) is_rep[a] = true;
  std::vector<std::size_t> candidates;
  for (std::size_t a = 0; a < positive.size(); ++a) {
    if (is_rep[a]) {
      candidates.push_back(positive[a]);
    } else {
      report.clients[positive[a]].kept = false;
      report.clients[positive[a]].reason = "cluster_dedup";
    }
  }

  // magnitude reset to the median raw norm over all positive contributors
  Vec raw_norms(positive.size());
  for (std::size_t a = 0; a < positive.size(); ++a)
    raw_norms[a] = report.clients[positive[a]].norm_before;
  std::vector<Vec> adjusted;
  adjusted.reserve(candidates.size());
  for (std::size_t i : candidates) adjusted.push_back(report.clients[i].corrected);
  const double target_norm = magnitude_adjust(adjusted, raw_norms);
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    ClientRecord& rec = report.clients[candidates[a]];
    rec.corrected = std::move(adjusted[a]);
    rec.norm_after = target_norm;
  }

  report.model_loss = candidate_loss(w, Vec(w.size(), 0.0), cfg.eta, spec, eval_set);
  report.ell_o_used = cfg.ell_o > 0.0 ? cfg.ell_o : 1.25 * report.model_loss;
  int k_top = cfg.k_top >= 0
                  ? cfg.k_top
                  : static_cast<int>(std::ceil(0.1 * static_cast<double>(candidates.size())));
  if (k_top >= static_cast<int>(candidates.size()))
    k_top = static_cast<int>(candidates.size()) - 1;
  report.k_top_used = k_top;

  for (std::size_t i : candidates)
    report.clients[i].loss =
        candidate_loss(w, report.clients[i].corrected, cfg.eta, spec, eval_set);

  // remove the k_top highest losses (ties toward the lower client index),
  // plus anything at or above the loss bound
  std::vector<std::size_t> by_loss = candidates;
  std::sort(by_loss.begin(), by_loss.end(), [&](std::size_t a, std::size_t b) {
    const double la = report.clients[a].loss, lb = report.clients[b].loss;
    if (la != lb) return la > lb;
    return a < b;
  });
  std::vector<bool> drop(n, false);
  for (int r = 0; r < k_top && r < static_cast<int>(by_loss.size()); ++r)
    drop[by_loss[r]] = true;
  for (std::size_t i : candidates)
    if (report.clients[i].loss >= report.ell_o_used) drop[i] = true;

  std::vector<Vec> survivors;
  std::vector<double> surv_alpha;
  for (std::size_t i : candidates) {
    ClientRecord& rec = report.clients[i];
    if (drop[i]) {
      rec.kept = false;
      rec.reason = "loss_reject";
    } else {
      rec.kept = true;
      survivors.push_back(rec.corrected);
      surv_alpha.push_back(rec.alpha);
    }
  }
  if (survivors.empty()) throw std::runtime_error("all updates rejected");
  return weighted_aggregate(survivors, surv_alpha);
}

std::string contribution_csv_header() {
  return "round,client_id,alpha,norm_before,norm_after,loss,decision,reason\n";
}

std::string contribution_csv(const ContributionReport& report, int round) {
  std::string out;
  for (const ClientRecord& rec : report.clients) {
    out += std::to_string(round) + "," + std::to_string(rec.client_id) + ",";
    out += format_double(rec.alpha) + "," + format_double(rec.norm_before) + ",";
    if (rec.norm_after >= 0.0) out += format_double(rec.norm_after);
    out += ",";
    if (rec.loss >= 0.0) out += format_double(rec.loss);
    out += ",";
    out += rec.kept ? "kept" : "rejected";
    out += "," + rec.reason + "\n";
  }
  return out;
}

}  // namespace fedidm

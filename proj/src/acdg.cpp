#include "fedidm/acdg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace fedidm {

namespace {

constexpr double kSigmaFloor = 1e-6;   // embedding-space scalar variances
constexpr double kVarFloor1d = 1e-8;   // cleanliness mixture variances
constexpr double kNormFloor = 1e-12;   // guards cosine similarity at the origin

double quantile_sorted(const Vec& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

double log_sum_exp(const Vec& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

Pooled pool_and_augment(const std::vector<std::vector<CondensedSet>>& history, int delta,
                        Rng& rng, const AugmentConfig& aug) {
  if (delta < 1) throw std::invalid_argument("pool_and_augment: window must be positive");
  Pooled out;
  const std::size_t n_rounds = history.size();
  const std::size_t start = n_rounds > static_cast<std::size_t>(delta)
                                ? n_rounds - static_cast<std::size_t>(delta)
                                : 0;
  for (std::size_t r = start; r < n_rounds; ++r) {
    for (std::size_t c = 0; c < history[r].size(); ++c) {
      const CondensedSet& set = history[r][c];
      for (std::size_t p = 0; p < set.points.size(); ++p) {
        PooledPoint pt;
        pt.x = set.points[p].x;
        pt.y = set.points[p].y;
        pt.round = set.round_tag;
        pt.client = static_cast<int>(c);
        pt.index = static_cast<int>(p);
        out.pool.push_back(std::move(pt));
      }
    }
  }
  out.views.reserve(out.pool.size() * 2);
  for (const PooledPoint& pt : out.pool) {
    AugmentedPair pair = augment_pair(pt.x, rng, aug);
    out.views.push_back(std::move(pair.s1));
    out.views.push_back(std::move(pair.s2));
  }
  return out;
}

GmmParams gmm_from_global(std::span<const Vec> embeddings, std::size_t k) {
  if (embeddings.empty()) throw std::invalid_argument("gmm_from_global: no embeddings");
  const std::size_t dim = embeddings[0].size();
  Vec mean(dim, 0.0);
  for (const Vec& r : embeddings) vec_add_scaled(mean, r, 1.0 / embeddings.size());
  double var = 0.0;
  for (const Vec& r : embeddings) {
    const Vec d = vec_sub(r, mean);
    var += dot(d, d);
  }
  var /= static_cast<double>(embeddings.size()) * static_cast<double>(dim);
  var = std::max(var, kSigmaFloor);
  GmmParams g;
  g.mu.assign(k, mean);
  g.sigma.assign(k, var);
  g.pi.assign(k, 1.0 / static_cast<double>(k));
  return g;
}

GmmStep guided_em_step(std::span<const Vec> embeddings, std::span<const Vec> predictions,
                       const GmmParams& prev, double eps_resp) {
  if (embeddings.size() != predictions.size() || embeddings.empty())
    throw std::invalid_argument("guided_em_step: embeddings and predictions must align");
  const std::size_t n = embeddings.size();
  const std::size_t k = predictions[0].size();
  const std::size_t dim = embeddings[0].size();
  if (prev.mu.size() != k || prev.sigma.size() != k)
    throw std::invalid_argument("guided_em_step: previous parameters have wrong arity");

  GmmStep out;
  out.params = prev;
  out.updated.assign(k, false);
  for (std::size_t c = 0; c < k; ++c) {
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) mass += predictions[i][c];
    if (mass < eps_resp) continue;  // starved component keeps previous values

    Vec mu(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) vec_add_scaled(mu, embeddings[i], predictions[i][c] / mass);
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec d = vec_sub(embeddings[i], mu);
      tr += predictions[i][c] * dot(d, d);
    }
    out.params.mu[c] = std::move(mu);
    out.params.sigma[c] = std::max(tr / mass / static_cast<double>(dim), kSigmaFloor);
    out.params.pi[c] = mass / static_cast<double>(n);
    out.updated[c] = true;
  }
  return out;
}

Vec gamma_from_sqdist(const Vec& sqdist, const Vec& sigma) {
  if (sqdist.size() != sigma.size() || sqdist.empty())
    throw std::invalid_argument("gamma_from_sqdist: length mismatch");
  Vec logits(sqdist.size());
  for (std::size_t c = 0; c < sqdist.size(); ++c) {
    if (!(sigma[c] > 0.0)) throw std::invalid_argument("gamma_from_sqdist: sigma must be positive");
    logits[c] = -sqdist[c] / (2.0 * sigma[c]);
  }
  return softmax(logits);
}

Vec posterior_row(const Vec& r, const GmmParams& gmm) {
  Vec sqd(gmm.mu.size());
  for (std::size_t c = 0; c < gmm.mu.size(); ++c) {
    const Vec d = vec_sub(r, gmm.mu[c]);
    sqd[c] = dot(d, d);
  }
  return gamma_from_sqdist(sqd, gmm.sigma);
}

CleanlinessScores fit_cleanliness(const Vec& values) {
  if (values.size() < 2) throw std::invalid_argument("fit_cleanliness: need at least 2 values");
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("fit_cleanliness: values must lie in [0, 1]");

  const std::size_t m = values.size();
  CleanlinessScores out;

  Vec sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.back() - sorted.front() < 1e-12) {
    // No spread to separate on; treat everything as clean.
    out.beta.assign(m, 1.0);
    out.mean[0] = out.mean[1] = sorted.front();
    out.var[0] = out.var[1] = kVarFloor1d;
    out.weight[0] = out.weight[1] = 0.5;
    out.degenerate = true;
    return out;
  }

  double mu[2] = {quantile_sorted(sorted, 0.25), quantile_sorted(sorted, 0.75)};
  if (mu[1] - mu[0] < 1e-9) {
    mu[0] = sorted.front();
    mu[1] = sorted.back();
  }
  double all_mean = 0.0;
  for (double v : values) all_mean += v;
  all_mean /= static_cast<double>(m);
  double all_var = 0.0;
  for (double v : values) all_var += (v - all_mean) * (v - all_mean);
  all_var = std::max(all_var / static_cast<double>(m), kVarFloor1d);
  double var[2] = {all_var, all_var};
  double w[2] = {0.5, 0.5};

  std::vector<std::array<double, 2>> resp(m);
  double prev_ll = -1e300;
  for (int iter = 0; iter < 100; ++iter) {
    double ll = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double lp[2];
      for (int j = 0; j < 2; ++j) {
        const double d = values[i] - mu[j];
        lp[j] = std::log(w[j]) - 0.5 * std::log(2.0 * 3.141592653589793 * var[j]) -
                d * d / (2.0 * var[j]);
      }
      const double lse = log_sum_exp({lp[0], lp[1]});
      resp[i][0] = std::exp(lp[0] - lse);
      resp[i][1] = std::exp(lp[1] - lse);
      ll += lse;
    }
    for (int j = 0; j < 2; ++j) {
      double nj = 0.0, sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        nj += resp[i][j];
        sum += resp[i][j] * values[i];
      }
      if (nj < 1e-12) continue;  // emptied component stays put
      mu[j] = sum / nj;
      double sq = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        sq += resp[i][j] * (values[i] - mu[j]) * (values[i] - mu[j]);
      var[j] = std::max(sq / nj, kVarFloor1d);
      w[j] = nj / static_cast<double>(m);
    }
    if (std::abs(ll - prev_ll) / std::max(1.0, std::abs(ll)) < 1e-6) break;
    prev_ll = ll;
  }

  // beta is the posterior of the higher-mean (clean) component.
  const int hi = mu[1] >= mu[0] ? 1 : 0;
  const int lo = 1 - hi;
  out.beta.resize(m);
  for (std::size_t i = 0; i < m; ++i) out.beta[i] = resp[i][hi];
  out.mean[0] = mu[lo];
  out.mean[1] = mu[hi];
  out.var[0] = var[lo];
  out.var[1] = var[hi];
  out.weight[0] = w[lo];
  out.weight[1] = w[hi];
  return out;
}

SoftPair relabel(int claimed, double beta, const Vec& h1, const Vec& h2, std::size_t k) {
  if (claimed < 0 || static_cast<std::size_t>(claimed) >= k)
    throw std::invalid_argument("relabel: claimed label out of range");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("relabel: beta must lie in [0, 1]");
  if (h1.size() != k || h2.size() != k) throw std::invalid_argument("relabel: prediction arity");
  SoftPair out;
  out.y1.assign(k, 0.0);
  out.y2.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double onehot = (static_cast<std::size_t>(claimed) == c) ? 1.0 : 0.0;
    out.y1[c] = beta * onehot + (1.0 - beta) * h1[c];
    out.y2[c] = beta * onehot + (1.0 - beta) * h2[c];
  }
  return out;
}

MixupPlan make_mixup_plan(std::size_t m, Rng& rng, double alpha) {
  if (m < 2) throw std::invalid_argument("make_mixup_plan: need at least 2 points");
  MixupPlan plan;
  plan.partner.resize(m);
  plan.rho.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = rng.uniform_int(m - 1);
    if (j >= i) ++j;  // uniform over the other points
    plan.partner[i] = j;
    plan.rho[i] = rng.beta(alpha, alpha);
  }
  return plan;
}

RectLoss rectifier_loss(const RectifierNet& net, std::span<const PooledPoint> pool,
                        std::span<const Vec> views, std::span<const SoftPair> labels, double tau,
                        const MixupPlan& plan) {
  const std::size_t m = pool.size();
  if (m < 2) throw std::runtime_error("contrastive loss needs >= 2 points");
  if (views.size() != 2 * m || labels.size() != m)
    throw std::invalid_argument("rectifier_loss: views/labels do not match the pool");
  if (plan.partner.size() != m || plan.rho.size() != m)
    throw std::invalid_argument("rectifier_loss: mixup plan does not match the pool");
  if (!(tau > 0.0)) throw std::invalid_argument("rectifier_loss: tau must be positive");

  RectLoss out;
  out.grads = rect_zeros_like(net);

  // Forward all embeddings once; gradients on them accumulate below and are
  // pushed through the encoder at the end.
  std::vector<Vec> e1(m), e2(m), ep(m), h1(m), h2(m);
  for (std::size_t i = 0; i < m; ++i) {
    e1[i] = rect_feature(net, views[2 * i]);
    e2[i] = rect_feature(net, views[2 * i + 1]);
    ep[i] = rect_feature(net, pool[i].x);
    h1[i] = rect_logits(net, views[2 * i]);
    h2[i] = rect_logits(net, views[2 * i + 1]);
  }
  const std::size_t dim = e1[0].size();
  std::vector<Vec> ge1(m, Vec(dim, 0.0)), ge2(m, Vec(dim, 0.0)), gep(m, Vec(dim, 0.0));
  std::vector<Vec> gh1(m), gh2(m);

  // Cross-pair supervision: view 1 learns from the second view's label and
  // vice versa.
  for (std::size_t i = 0; i < m; ++i) {
    out.ce += ce_loss(h1[i], labels[i].y2) + ce_loss(h2[i], labels[i].y1);
    gh1[i] = ce_logit_grad(h1[i], labels[i].y2);
    gh2[i] = ce_logit_grad(h2[i], labels[i].y1);
  }

  // InfoNCE on unit embeddings (cosine similarity): positive is the sibling
  // view, negatives are the embeddings of every other pooled (original)
  // point. Raw dot products make the loss unbounded below once the pairs
  // separate, so the similarity is computed on normalized vectors.
  std::vector<Vec> u1(m), u2(m), up(m);
  Vec n1(m), n2(m), np(m);
  for (std::size_t i = 0; i < m; ++i) {
    n1[i] = std::max(l2_norm(e1[i]), kNormFloor);
    n2[i] = std::max(l2_norm(e2[i]), kNormFloor);
    np[i] = std::max(l2_norm(ep[i]), kNormFloor);
    u1[i] = vec_scale(e1[i], 1.0 / n1[i]);
    u2[i] = vec_scale(e2[i], 1.0 / n2[i]);
    up[i] = vec_scale(ep[i], 1.0 / np[i]);
  }
  std::vector<Vec> gu1(m, Vec(dim, 0.0)), gu2(m, Vec(dim, 0.0)), gup(m, Vec(dim, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = dot(u1[i], u2[i]) / tau;
    Vec scores;
    std::vector<std::size_t> neg_idx;
    scores.reserve(m - 1);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      scores.push_back(dot(u1[i], up[j]) / tau);
      neg_idx.push_back(j);
    }
    const double lse = log_sum_exp(scores);
    out.ctr += -pos + lse;
    vec_add_scaled(gu1[i], u2[i], -1.0 / tau);
    vec_add_scaled(gu2[i], u1[i], -1.0 / tau);
    for (std::size_t t = 0; t < scores.size(); ++t) {
      const double p = std::exp(scores[t] - lse);
      vec_add_scaled(gu1[i], up[neg_idx[t]], p / tau);
      vec_add_scaled(gup[neg_idx[t]], u1[i], p / tau);
    }
  }
  // Chain through the normalization: d/de (g . e/|e|) = (g - (g.u)u)/|e|.
  for (std::size_t i = 0; i < m; ++i) {
    vec_add_scaled(ge1[i], gu1[i], 1.0 / n1[i]);
    vec_add_scaled(ge1[i], u1[i], -dot(gu1[i], u1[i]) / n1[i]);
    vec_add_scaled(ge2[i], gu2[i], 1.0 / n2[i]);
    vec_add_scaled(ge2[i], u2[i], -dot(gu2[i], u2[i]) / n2[i]);
    vec_add_scaled(gep[i], gup[i], 1.0 / np[i]);
    vec_add_scaled(gep[i], up[i], -dot(gup[i], up[i]) / np[i]);
  }

  // Mixup on the original pooled points with averaged pair labels.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = plan.partner[i];
    if (j >= m || j == i) throw std::invalid_argument("rectifier_loss: bad mixup partner");
    const double rho = plan.rho[i];
    Vec yi(labels[i].y1.size()), yj(labels[j].y1.size());
    for (std::size_t c = 0; c < yi.size(); ++c) {
      yi[c] = 0.5 * (labels[i].y1[c] + labels[i].y2[c]);
      yj[c] = 0.5 * (labels[j].y1[c] + labels[j].y2[c]);
    }
    const MixupResult mixed = mixup_with_rho(pool[i].x, pool[j].x, yi, yj, rho);
    const Vec logits = rect_logits(net, mixed.x);
    out.mix += ce_loss(logits, mixed.y);
    const Vec gh = ce_logit_grad(logits, mixed.y);
    rect_backprop(net, mixed.x, nullptr, &gh, out.grads);
  }

  for (std::size_t i = 0; i < m; ++i) {
    rect_backprop(net, views[2 * i], &ge1[i], &gh1[i], out.grads);
    rect_backprop(net, views[2 * i + 1], &ge2[i], &gh2[i], out.grads);
    rect_backprop(net, pool[i].x, &gep[i], nullptr, out.grads);
  }

  out.total = out.ce + out.ctr + out.mix;
  return out;
}

AcdgRound run_acdg_round(const std::vector<std::vector<CondensedSet>>& history,
                         RectifierNet& net, GmmParams& gmm, const AcdgConfig& cfg, int round,
                         Rng& rng) {
  AcdgRound out;
  Pooled pooled = pool_and_augment(history, cfg.delta_window, rng, cfg.aug);
  const std::size_t m = pooled.pool.size();
  if (m < 2) throw std::runtime_error("contrastive loss needs >= 2 points");
  const std::size_t k = net.n_classes();

  Vec beta(m, 1.0);
  for (int epoch = 0; epoch < cfg.epochs_rect; ++epoch) {
    std::vector<Vec> emb(2 * m), pred(2 * m);
    for (std::size_t v = 0; v < 2 * m; ++v) {
      emb[v] = rect_feature(net, pooled.views[v]);
      pred[v] = rect_predict(net, pooled.views[v]);
    }
    if (gmm.mu.empty()) gmm = gmm_from_global(emb, k);
    gmm = guided_em_step(emb, pred, gmm, cfg.eps_resp).params;

    Vec vals(m);
    for (std::size_t i = 0; i < m; ++i) {
      const Vec g1 = posterior_row(emb[2 * i], gmm);
      const Vec g2 = posterior_row(emb[2 * i + 1], gmm);
      const int y = pooled.pool[i].y;
      vals[i] = 0.5 * (g1[y] + g2[y]);
    }
    beta = fit_cleanliness(vals).beta;

    std::vector<SoftPair> labels(m);
    for (std::size_t i = 0; i < m; ++i)
      labels[i] = relabel(pooled.pool[i].y, beta[i], pred[2 * i], pred[2 * i + 1], k);

    const MixupPlan plan = make_mixup_plan(m, rng, cfg.mix_alpha);
    const RectLoss loss = rectifier_loss(net, pooled.pool, pooled.views, labels, cfg.tau, plan);
    rect_axpy(net, loss.grads, -cfg.rect_lr / static_cast<double>(m));
  }

  out.pool = std::move(pooled.pool);
  out.beta = std::move(beta);
  out.soft_pseudo.resize(m);
  out.pseudo.resize(m);
  out.audit.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.soft_pseudo[i] = rect_predict(net, out.pool[i].x);
    out.pseudo[i] = static_cast<int>(argmax_index(out.soft_pseudo[i]));
    out.audit[i] = AuditEntry{round, static_cast<long>(i), out.pool[i].y, out.pseudo[i],
                              out.beta[i]};
    if (out.pseudo[i] != out.pool[i].y) out.n_changed++;
  }
  return out;
}

}  // namespace fedidm

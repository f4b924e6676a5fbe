#include "fedidm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace fedidm {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

/// Plain mini-batch SGD on hard labels; returns the flattened weights after
/// `epochs` passes. The shuffle order is the only rng consumer.
Vec sgd_run(std::span<const Example> pts, const NetSpec& spec, const Vec& w, int epochs, double lr,
            int batch, Rng& rng) {
  if (epochs <= 0 || lr == 0.0 || pts.empty()) return w;
  NetParams cur = unflatten(spec, w);
  const std::size_t k = spec.output_dim();
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainSample> block;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch));
      block.clear();
      for (std::size_t i = start; i < stop; ++i) {
        const Example& ex = pts[order[i]];
        Vec target(k, 0.0);
        target[static_cast<std::size_t>(ex.y)] = 1.0;
        block.push_back({ex.x, std::move(target)});
      }
      NetParams grad = zeros_like(spec);
      backward_ce(spec, cur, block, grad);
      axpy_params(cur, grad, -lr);
    }
  }
  return flatten(cur);
}

int resolve_byz(int requested, int n, double frac, int cap_denominator) {
  if (requested >= 0) return requested;
  int cap = (n - 3) / cap_denominator;
  if (cap < 0) cap = 0;
  const int expected = static_cast<int>(std::floor(frac * n));
  return std::min(expected, cap);
}

Vec mean_of(std::span<const Vec> vs) {
  Vec out(vs.front().size(), 0.0);
  for (const Vec& v : vs) vec_add_scaled(out, v, 1.0);
  return vec_scale(out, 1.0 / static_cast<double>(vs.size()));
}

}  // namespace

const std::vector<std::string>& aggregator_names() {
  static const std::vector<std::string> names = {"fedavg",       "bulyan",  "multi_krum",
                                                 "trimmed_mean", "fltrust", "fedidm"};
  return names;
}

void validate(const SimConfig& cfg) {
  require(cfg.n_clients >= 1, "n_clients must be positive");
  require(cfg.clients_per_round >= 1 && cfg.clients_per_round <= cfg.n_clients,
          "clients_per_round outside [1, n_clients]");
  require(cfg.total_rounds >= 1, "total_rounds must be positive");
  require(cfg.stage_switch >= 1 && cfg.stage_switch < cfg.total_rounds,
          "stage_switch must lie strictly between 0 and total_rounds");
  require(cfg.local_epochs >= 0, "local_epochs must be >= 0");
  require(cfg.local_lr >= 0.0, "local_lr must be >= 0");
  require(cfg.local_batch >= 1, "local_batch must be positive");
  const auto& names = aggregator_names();
  require(std::find(names.begin(), names.end(), cfg.aggregator) != names.end(),
          "unknown aggregator: " + cfg.aggregator);
  require(cfg.krum_f >= -1, "krum_f must be -1 or >= 0");
  require(cfg.bulyan_f >= -1, "bulyan_f must be -1 or >= 0");
  require(cfg.multi_k == -1 || cfg.multi_k >= 1, "multi_k must be -1 or positive");
  require(cfg.trim_fraction >= 0.0 && cfg.trim_fraction < 0.5, "trim_fraction outside [0, 0.5)");

  require(cfg.attack.malicious_fraction >= 0.0 && cfg.attack.malicious_fraction <= 0.5,
          "malicious_fraction outside [0, 0.5]");
  require(cfg.attack.adversarial_round_fraction >= 0.0 &&
              cfg.attack.adversarial_round_fraction <= 1.0,
          "adversarial_round_fraction outside [0, 1]");
  require(cfg.attack.gamma_init > 0.0, "gamma_init must be positive");
  require(cfg.attack.halving_steps >= 1, "halving_steps must be positive");

  require(cfg.ra.lambda > 0.0 && cfg.ra.lambda < 1.0, "lambda outside (0, 1)");
  require(cfg.ra.delta_hist >= 0, "delta_hist must be >= 0");
  require(cfg.ra.dbscan_eps >= 0.0, "dbscan_eps must be >= 0");
  require(cfg.ra.eta > 0.0, "eta must be positive");

  require(cfg.dm.ipc >= 1, "ipc must be positive");
  require(cfg.dm.steps >= 0, "dm steps must be >= 0");
  require(cfg.dm.n_random_nets >= 1, "n_random_nets must be positive");
  require(cfg.dm.lr_s > 0.0, "lr_s must be positive");
  require(cfg.dm.upsilon >= 0.0, "upsilon must be >= 0");

  require(cfg.acdg.delta_window >= 1, "delta_window must be positive");
  require(cfg.acdg.tau > 0.0, "tau must be positive");
  require(cfg.acdg.epochs_rect >= 1, "epochs_rect must be positive");
  require(cfg.acdg.rect_lr >= 0.0, "rect_lr must be >= 0");
  require(cfg.acdg.mix_alpha > 0.0, "mix_alpha must be positive");
  require(cfg.acdg.eps_resp > 0.0, "eps_resp must be positive");

  require(cfg.data.k_classes >= 2, "k_classes must be >= 2");
  require(cfg.data.input_dim >= 1, "input_dim must be positive");
  require(cfg.data.points_per_class >= 1, "points_per_class must be positive");
  require(cfg.data.test_points_per_class >= 1, "test_points_per_class must be positive");
  require(cfg.data.root_points_per_class >= 1, "root_points_per_class must be positive");
  require(cfg.data.separation > 0.0, "separation must be positive");
  require(cfg.data.concentration > 0.0, "concentration must be positive");

  require(cfg.model.embed_dim >= 1, "embed_dim must be positive");
  require(!cfg.model.phi.empty(), "phi widths must be non-empty");
  for (std::size_t wdt : cfg.model.hidden) require(wdt >= 1, "hidden widths must be positive");
  for (std::size_t wdt : cfg.model.phi) require(wdt >= 1, "phi widths must be positive");
  for (std::size_t wdt : cfg.model.rect_hidden)
    require(wdt >= 1, "rect_hidden widths must be positive");
}

std::vector<bool> schedule_adversarial(int total_rounds, double fraction, Rng& rng) {
  require(total_rounds >= 1, "total_rounds must be positive");
  require(fraction >= 0.0 && fraction <= 1.0, "adversarial_round_fraction outside [0, 1]");
  const int count = static_cast<int>(std::lround(fraction * total_rounds));
  std::vector<int> order(static_cast<std::size_t>(total_rounds));
  std::iota(order.begin(), order.end(), 1);
  rng.shuffle(order);
  std::vector<bool> flags(static_cast<std::size_t>(total_rounds) + 1, false);
  for (int i = 0; i < count; ++i) flags[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
  return flags;
}

Vec local_train(std::span<const Example> shard, const NetSpec& spec, const Vec& w, int epochs,
                double lr, int batch, Rng& rng) {
  require(batch >= 1, "batch must be positive");
  const Vec after = sgd_run(shard, spec, w, epochs, lr, batch, rng);
  return vec_sub(w, after);
}

double compute_ter(const NetSpec& spec, const Vec& w, std::span<const Example> test) {
  require(!test.empty(), "empty test set");
  const NetParams params = unflatten(spec, w);
  std::size_t wrong = 0;
  for (const Example& ex : test) {
    const Vec logits = forward(spec, params, ex.x);
    if (static_cast<int>(argmax_index(logits)) != ex.y) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(test.size());
}

RectCounts tally_rectification(const AcdgRound& acdg, std::span<const int> true_labels) {
  require(true_labels.size() == acdg.pool.size(), "true labels misaligned with the pool");
  RectCounts c;
  for (std::size_t i = 0; i < acdg.pool.size(); ++i) {
    const int claimed = acdg.pool[i].y;
    const int pseudo = acdg.pseudo[i];
    if (claimed != true_labels[i]) {
      ++c.flipped;
      if (pseudo == true_labels[i]) ++c.recovered;
    } else {
      ++c.clean;
      if (pseudo != claimed) ++c.clean_changed;
    }
  }
  return c;
}

void compute_rectification_metrics(const RectCounts& counts, MetricSummary& out) {
  if (counts.flipped > 0) {
    out.rsr = static_cast<double>(counts.recovered) / static_cast<double>(counts.flipped);
    out.fnr = 1.0 - *out.rsr;
  }
  if (counts.clean > 0)
    out.fpr = static_cast<double>(counts.clean_changed) / static_cast<double>(counts.clean);
}

ExperimentResult run_experiment(const SimConfig& cfg) {
  validate(cfg);
  const int k = cfg.data.k_classes;

  Rng master(cfg.seed);
  Rng data_rng = master.child(1);
  const Dataset train =
      gen_blobs(k, cfg.data.input_dim, cfg.data.points_per_class, cfg.data.separation, data_rng);
  Rng test_rng = master.child(2);
  const Dataset test = gen_blobs(k, cfg.data.input_dim, cfg.data.test_points_per_class,
                                 cfg.data.separation, test_rng);
  Rng root_rng = master.child(3);
  const Dataset server_root = gen_blobs(k, cfg.data.input_dim, cfg.data.root_points_per_class,
                                        cfg.data.separation, root_rng);
  Rng part_rng = master.child(4);
  const Partition part = dirichlet_partition(train, cfg.n_clients, cfg.data.concentration, part_rng);

  std::vector<std::vector<Example>> shards(static_cast<std::size_t>(cfg.n_clients));
  for (std::size_t c = 0; c < shards.size(); ++c) {
    shards[c].reserve(part.client_shards[c].size());
    for (std::size_t idx : part.client_shards[c]) shards[c].push_back(train.points[idx]);
  }

  NetSpec clf_spec;
  clf_spec.widths.push_back(static_cast<std::size_t>(cfg.data.input_dim));
  clf_spec.widths.insert(clf_spec.widths.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
  clf_spec.widths.push_back(static_cast<std::size_t>(k));
  NetSpec phi_spec;
  phi_spec.widths.push_back(static_cast<std::size_t>(cfg.data.input_dim));
  phi_spec.widths.insert(phi_spec.widths.end(), cfg.model.phi.begin(), cfg.model.phi.end());

  Rng init_rng = master.child(5);
  Vec w = flatten(init_params(clf_spec, init_rng));
  Rng rect_rng = master.child(6);
  RectifierNet rect = init_rectifier(static_cast<std::size_t>(cfg.data.input_dim),
                                     cfg.model.rect_hidden, cfg.model.embed_dim,
                                     static_cast<std::size_t>(k), Activation::Tanh, rect_rng);
  GmmParams gmm;
  Rng sched_rng = master.child(7);
  const std::vector<bool> adv =
      schedule_adversarial(cfg.total_rounds, cfg.attack.adversarial_round_fraction, sched_rng);
  Rng acdg_rng = master.child(8);
  Rng ra_rng = master.child(9);

  const bool is_fedidm = cfg.aggregator == "fedidm";
  const AttackKind kind = cfg.attack.kind;
  const bool label_kind = kind == AttackKind::SLF || kind == AttackKind::DLF;
  const bool update_kind =
      kind == AttackKind::LIE || kind == AttackKind::STAT_OPT || kind == AttackKind::DYN_OPT;
  const int n_mal = kind == AttackKind::NONE
                        ? 0
                        : static_cast<int>(std::floor(cfg.attack.malicious_fraction * cfg.n_clients));

  const int f_krum = resolve_byz(cfg.krum_f, cfg.clients_per_round, cfg.attack.malicious_fraction, 2);
  const int multi_k =
      cfg.multi_k != -1 ? cfg.multi_k : std::max(1, cfg.clients_per_round - f_krum - 2);
  const int f_bulyan =
      resolve_byz(cfg.bulyan_f, cfg.clients_per_round, cfg.attack.malicious_fraction, 4);

  UpdateHistory hist(static_cast<std::size_t>(cfg.ra.delta_hist));
  std::vector<std::vector<CondensedSet>> cond_history;
  std::vector<std::vector<std::vector<int>>> truth_history;  // pre-attack labels, set-aligned
  std::vector<Example> frozen_pool;  // pseudo-labeled pool fixed at the stage switch

  ExperimentResult out;
  out.rounds_csv = "round,stage,adversarial,ter,accepted,rejected_negative,rejected_cluster,rejected_loss\n";
  RectCounts rect_totals;

  std::vector<int> all_ids(static_cast<std::size_t>(cfg.n_clients));
  std::iota(all_ids.begin(), all_ids.end(), 0);

  for (int t = 1; t <= cfg.total_rounds; ++t) {
    Rng round_rng = master.child(1000 + static_cast<std::uint64_t>(t));
    std::vector<int> selected = all_ids;
    if (cfg.clients_per_round < cfg.n_clients) {
      Rng pick_rng = round_rng.child(1);
      pick_rng.shuffle(selected);
      selected.resize(static_cast<std::size_t>(cfg.clients_per_round));
      std::sort(selected.begin(), selected.end());
    }
    const std::size_t m_sel = selected.size();
    const bool scheduled = adv[static_cast<std::size_t>(t)];

    RoundRecord rec;
    rec.round = t;
    const bool acdg_stage = is_fedidm && t <= cfg.stage_switch;
    rec.stage = acdg_stage ? "ACDG" : "RA";

    if (acdg_stage) {
      const bool attacked = scheduled && label_kind && n_mal > 0;
      const NetParams w_params = unflatten(clf_spec, w);
      std::vector<CondensedSet> sets;
      std::vector<std::vector<int>> truths;
      sets.reserve(m_sel);
      truths.reserve(m_sel);
      for (std::size_t pos = 0; pos < m_sel; ++pos) {
        const int c = selected[pos];
        Rng crng = round_rng.child(10 + pos);
        CondensedSet s = generate_condensed(shards[static_cast<std::size_t>(c)], cfg.dm, crng,
                                            phi_spec, clf_spec, w_params, t);
        std::vector<int> truth(s.points.size());
        for (std::size_t i = 0; i < s.points.size(); ++i) truth[i] = s.points[i].y;
        if (attacked && c < n_mal) {
          if (kind == AttackKind::SLF)
            slf(s, k);
          else
            dlf(s, clf_spec, w_params);
        }
        sets.push_back(std::move(s));
        truths.push_back(std::move(truth));
      }
      cond_history.push_back(std::move(sets));
      truth_history.push_back(std::move(truths));
      rec.adversarial = attacked;

      AcdgRound ar;
      if (cfg.acdg_enabled) {
        ar = run_acdg_round(cond_history, rect, gmm, cfg.acdg, t, acdg_rng);
      } else {
        // ablation: trust the claimed labels as they arrive
        Pooled pooled = pool_and_augment(cond_history, cfg.acdg.delta_window, acdg_rng, cfg.acdg.aug);
        ar.pool = std::move(pooled.pool);
        ar.pseudo.resize(ar.pool.size());
        ar.beta = Vec(ar.pool.size(), 1.0);
        for (std::size_t i = 0; i < ar.pool.size(); ++i) ar.pseudo[i] = ar.pool[i].y;
      }

      if (attacked) {
        std::vector<int> truth(ar.pool.size());
        for (std::size_t i = 0; i < ar.pool.size(); ++i) {
          const PooledPoint& p = ar.pool[i];
          truth[i] = truth_history[static_cast<std::size_t>(p.round - 1)]
                                  [static_cast<std::size_t>(p.client)]
                                  [static_cast<std::size_t>(p.index)];
        }
        const RectCounts c = tally_rectification(ar, truth);
        rect_totals.flipped += c.flipped;
        rect_totals.recovered += c.recovered;
        rect_totals.clean += c.clean;
        rect_totals.clean_changed += c.clean_changed;
      }

      std::vector<Example> pool_pts(ar.pool.size());
      for (std::size_t i = 0; i < ar.pool.size(); ++i)
        pool_pts[i] = Example{ar.pool[i].x, ar.pseudo[i]};
      Rng srv_rng = round_rng.child(2);
      w = sgd_run(pool_pts, clf_spec, w, cfg.local_epochs, cfg.local_lr, cfg.local_batch, srv_rng);
      if (t == cfg.stage_switch) frozen_pool = std::move(pool_pts);
    } else {
      const bool flip_local = scheduled && label_kind && n_mal > 0 && !is_fedidm;
      std::vector<Vec> updates(m_sel);
      std::vector<std::size_t> mal_pos;
      for (std::size_t pos = 0; pos < m_sel; ++pos) {
        const int c = selected[pos];
        if (c < n_mal) mal_pos.push_back(pos);
        Rng lrng = round_rng.child(100 + pos);
        if (flip_local && c < n_mal) {
          CondensedSet tampered;
          tampered.points = shards[static_cast<std::size_t>(c)];
          if (kind == AttackKind::SLF)
            slf(tampered, k);
          else
            dlf(tampered, clf_spec, unflatten(clf_spec, w));
          updates[pos] = local_train(tampered.points, clf_spec, w, cfg.local_epochs, cfg.local_lr,
                                     cfg.local_batch, lrng);
        } else {
          updates[pos] = local_train(shards[static_cast<std::size_t>(c)], clf_spec, w,
                                     cfg.local_epochs, cfg.local_lr, cfg.local_batch, lrng);
        }
      }

      Vec g_s;
      if (is_fedidm && cfg.ra_enabled) {
        Rng gs_rng = round_rng.child(2);
        g_s = vec_sub(w, sgd_run(frozen_pool, clf_spec, w, cfg.local_epochs, cfg.local_lr,
                                 cfg.local_batch, gs_rng));
      } else if (cfg.aggregator == "fltrust") {
        Rng gs_rng = round_rng.child(2);
        g_s = vec_sub(w, sgd_run(server_root.points, clf_spec, w, cfg.local_epochs, cfg.local_lr,
                                 cfg.local_batch, gs_rng));
      }

      if (scheduled && update_kind && !mal_pos.empty() && mal_pos.size() < m_sel) {
        std::vector<Vec> honest;
        honest.reserve(m_sel - mal_pos.size());
        for (std::size_t pos = 0; pos < m_sel; ++pos)
          if (selected[pos] >= n_mal) honest.push_back(updates[pos]);
        const BenignView view = make_benign_view(honest);

        Vec crafted;
        if (kind == AttackKind::LIE) {
          crafted = lie(view, static_cast<int>(m_sel), static_cast<int>(mal_pos.size()),
                        cfg.attack.z_override);
        } else {
          auto with_candidate = [&](const Vec& cand) {
            std::vector<Vec> full = updates;
            for (std::size_t pos : mal_pos) full[pos] = cand;
            return full;
          };
          AcceptanceOracle oracle;
          if (cfg.aggregator == "fedavg" || (is_fedidm && !cfg.ra_enabled)) {
            oracle = [](const Vec&) { return true; };
          } else if (cfg.aggregator == "multi_krum") {
            oracle = [&, f_krum, multi_k](const Vec& cand) {
              const auto full = with_candidate(cand);
              for (std::size_t s : multi_krum_select(full, f_krum, multi_k))
                if (std::find(mal_pos.begin(), mal_pos.end(), s) != mal_pos.end()) return true;
              return false;
            };
          } else if (cfg.aggregator == "bulyan") {
            oracle = [&, f_bulyan](const Vec& cand) {
              const auto full = with_candidate(cand);
              for (std::size_t s : bulyan_select(full, f_bulyan))
                if (std::find(mal_pos.begin(), mal_pos.end(), s) != mal_pos.end()) return true;
              return false;
            };
          } else if (cfg.aggregator == "trimmed_mean") {
            // accepted when some malicious copy survives trimming in at
            // least half of the coordinates
            oracle = [&](const Vec& cand) {
              const auto full = with_candidate(cand);
              const std::size_t n = full.size();
              const std::size_t cut =
                  static_cast<std::size_t>(cfg.trim_fraction * static_cast<double>(n));
              const std::size_t dim = cand.size();
              std::size_t hits = 0;
              std::vector<std::pair<double, std::size_t>> col(n);
              for (std::size_t j = 0; j < dim; ++j) {
                for (std::size_t i = 0; i < n; ++i) col[i] = {full[i][j], i};
                std::sort(col.begin(), col.end());
                for (std::size_t r = cut; r < n - cut; ++r) {
                  if (std::find(mal_pos.begin(), mal_pos.end(), col[r].second) != mal_pos.end()) {
                    ++hits;
                    break;
                  }
                }
              }
              return 2 * hits >= dim;
            };
          } else if (cfg.aggregator == "fltrust") {
            oracle = [&](const Vec& cand) { return cosine_similarity(cand, g_s) > 0.0; };
          } else {
            const Rng probe = round_rng.child(99);
            oracle = [&, probe](const Vec& cand) {
              const auto full = with_candidate(cand);
              ContributionReport rep;
              Rng r = probe;
              try {
                fedidm_aggregate(full, hist, g_s, w, clf_spec, frozen_pool, cfg.ra, r, rep);
              } catch (const std::runtime_error&) {
                return false;
              }
              for (std::size_t pos : mal_pos)
                if (rep.clients[pos].kept) return true;
              return false;
            };
          }
          try {
            const CraftResult res =
                kind == AttackKind::STAT_OPT
                    ? stat_opt(view, oracle, cfg.attack.gamma_init, cfg.attack.halving_steps,
                               cfg.attack.stat_literal)
                    : dyn_opt(view, oracle, cfg.attack.gamma_init, cfg.attack.halving_steps,
                              cfg.attack.dyn_use_std);
            crafted = res.update;
          } catch (const std::runtime_error&) {
            // benign stats gave no direction to perturb; same fallback as an
            // exhausted search, the attacker submits the benign mean
            crafted = view.mean;
          }
        }
        for (std::size_t pos : mal_pos) updates[pos] = crafted;
        rec.adversarial = true;
      }
      rec.adversarial = rec.adversarial || (flip_local && !mal_pos.empty());

      Vec g;
      bool moved = true;
      if (is_fedidm && cfg.ra_enabled) {
        ContributionReport rep;
        try {
          g = fedidm_aggregate(updates, hist, g_s, w, clf_spec, frozen_pool, cfg.ra, ra_rng, rep);
        } catch (const std::runtime_error&) {
          moved = false;
          rec.skipped = true;
        }
        for (const ClientRecord& c : rep.clients) {
          if (c.kept)
            ++rec.accepted;
          else if (c.reason == "negative_contribution")
            ++rec.rejected_negative;
          else if (c.reason == "cluster_dedup")
            ++rec.rejected_cluster;
          else if (c.reason == "loss_reject")
            ++rec.rejected_loss;
        }
        if (out.contributions_csv.empty()) out.contributions_csv = contribution_csv_header();
        out.contributions_csv += contribution_csv(rep, t);
      } else if (is_fedidm) {
        // ablation: plain averaging of the local updates, no screening
        g = mean_of(updates);
        rec.accepted = static_cast<int>(m_sel);
      } else if (cfg.aggregator == "fedavg") {
        g = fedavg(updates, Vec(m_sel, 1.0));
        rec.accepted = static_cast<int>(m_sel);
      } else if (cfg.aggregator == "multi_krum") {
        g = multi_krum(updates, f_krum, multi_k);
        rec.accepted = multi_k;
      } else if (cfg.aggregator == "trimmed_mean") {
        g = trimmed_mean(updates, cfg.trim_fraction);
        rec.accepted = static_cast<int>(m_sel);
      } else if (cfg.aggregator == "bulyan") {
        g = bulyan(updates, f_bulyan);
        rec.accepted = static_cast<int>(m_sel) - 2 * f_bulyan;
      } else {
        g = fltrust_like(updates, g_s);
        for (const Vec& u : updates)
          if (l2_norm(u) > 0.0 && cosine_similarity(u, g_s) > 0.0) ++rec.accepted;
      }

      if (moved) {
        w = apply_global(w, g, cfg.ra.eta);
        if (is_fedidm) hist.push(std::move(g));
      }
    }

    rec.ter = compute_ter(clf_spec, w, test.points);
    char row[160];
    std::snprintf(row, sizeof row, "%d,%s,%d,%.10g,%d,%d,%d,%d\n", rec.round, rec.stage.c_str(),
                  rec.adversarial ? 1 : 0, rec.ter, rec.accepted, rec.rejected_negative,
                  rec.rejected_cluster, rec.rejected_loss);
    out.rounds_csv += row;
    out.metrics.ter_series.push_back(rec.ter);
    out.rounds.push_back(std::move(rec));
  }

  out.metrics.final_ter = out.metrics.ter_series.back();
  compute_rectification_metrics(rect_totals, out.metrics);
  return out;
}

}  // namespace fedidm

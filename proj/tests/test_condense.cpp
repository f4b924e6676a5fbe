#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "fedidm/condense.hpp"

using namespace fedidm;

namespace {

RandomFeatureNet identity_phi(std::size_t dim) {
  RandomFeatureNet phi;
  phi.spec = NetSpec{{dim, dim}, Activation::Tanh};
  phi.params = zeros_like(phi.spec);
  for (std::size_t i = 0; i < dim; ++i) phi.params.layers[0].w.at(i, i) = 1.0;
  return phi;
}

// The loss recomputed from its definition with none of the library's
// condense internals: per-class embedding-mean gap plus the CE term.
double dm_loss_reference(std::span<const Example> real, const CondensedSet& s,
                         const RandomFeatureNet& phi, const NetSpec& clf_spec,
                         const NetParams& clf, double upsilon) {
  double loss = 0.0;
  const int k = static_cast<int>(clf_spec.output_dim());
  for (int c = 0; c < 16; ++c) {
    Vec mr(phi.spec.output_dim(), 0.0), ms(phi.spec.output_dim(), 0.0);
    int nr = 0, ns = 0;
    for (const auto& e : real)
      if (e.y == c) {
        vec_add_scaled(mr, features(phi, e.x), 1.0);
        nr++;
      }
    for (const auto& e : s.points)
      if (e.y == c) {
        vec_add_scaled(ms, features(phi, e.x), 1.0);
        ns++;
      }
    if (nr == 0 && ns == 0) continue;
    for (auto& v : mr) v /= nr;
    for (auto& v : ms) v /= ns;
    const Vec d = vec_sub(mr, ms);
    loss += dot(d, d);
  }
  double ce = 0.0;
  for (const auto& e : s.points) {
    Vec t(k, 0.0);
    t[e.y] = 1.0;
    ce += ce_loss(forward(clf_spec, clf, e.x), t);
  }
  return loss + upsilon * ce / static_cast<double>(s.points.size());
}

const NetSpec kClf{{2, 3}, Activation::Tanh};

CondensedSet make_set(std::vector<Example> pts) {
  CondensedSet s;
  s.points = std::move(pts);
  s.ipc = 1;
  return s;
}

}  // namespace

TEST_CASE("identity feature net, means [1,1] vs [0,0], upsilon 0: loss is 2") {
  const RandomFeatureNet phi = identity_phi(2);
  std::vector<Example> real{{{2, 0}, 0}, {{0, 2}, 0}};  // mean [1,1]
  const CondensedSet s = make_set({{{1, -1}, 0}, {{-1, 1}, 0}});  // mean [0,0]
  const NetParams clf = zeros_like(kClf);
  CHECK(dm_loss(real, s, phi, kClf, clf, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("copying the shard gives a zero gap") {
  Rng rng(3);
  const NetSpec phi_spec{{2, 5, 4}, Activation::Tanh};
  const RandomFeatureNet phi = sample_feature_net(phi_spec, rng);
  std::vector<Example> real{{{1, 2}, 0}, {{-1, 0.5}, 0}, {{3, 1}, 1}};
  const CondensedSet s = make_set(real);
  const NetParams clf = zeros_like(kClf);
  CHECK(dm_loss(real, s, phi, kClf, clf, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("class coverage mismatch between shard and set is an error") {
  const RandomFeatureNet phi = identity_phi(2);
  std::vector<Example> real{{{1, 0}, 0}, {{0, 1}, 1}};
  const CondensedSet s = make_set({{{1, 0}, 0}});  // class 1 missing
  const NetParams clf = zeros_like(kClf);
  CHECK_THROWS_AS(dm_loss(real, s, phi, kClf, clf, 0.0), std::invalid_argument);
}

TEST_CASE("dm_loss matches an independently coded reference on random instances") {
  Rng rng(11);
  const NetSpec phi_spec{{2, 6, 4}, Activation::Tanh};
  for (int trial = 0; trial < 5; ++trial) {
    const RandomFeatureNet phi = sample_feature_net(phi_spec, rng);
    NetParams clf = init_params(kClf, rng);
    std::vector<Example> real;
    std::vector<Example> syn;
    for (int i = 0; i < 12; ++i) real.push_back({{rng.uniform(-2, 2), rng.uniform(-2, 2)}, i % 3});
    for (int i = 0; i < 6; ++i) syn.push_back({{rng.uniform(-2, 2), rng.uniform(-2, 2)}, i % 3});
    const CondensedSet s = make_set(syn);
    const double got = dm_loss(real, s, phi, kClf, clf, 0.1);
    const double want = dm_loss_reference(real, s, phi, kClf, clf, 0.1);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("dm gradient agrees with central differences") {
  Rng rng(7);
  const NetSpec phi_spec{{2, 5, 3}, Activation::Tanh};
  const RandomFeatureNet phi = sample_feature_net(phi_spec, rng);
  NetParams clf = init_params(kClf, rng);
  std::vector<Example> real;
  for (int i = 0; i < 8; ++i) real.push_back({{rng.uniform(-1, 1), rng.uniform(-1, 1)}, i % 2});
  CondensedSet s = make_set({{{0.3, -0.2}, 0}, {{-0.5, 0.8}, 0}, {{1.0, 0.1}, 1}});

  const auto grads = dm_loss_grads(real, s, phi, kClf, clf, 0.1);
  const double h = 1e-5;
  for (std::size_t j = 0; j < s.points.size(); ++j) {
    for (std::size_t d = 0; d < 2; ++d) {
      CondensedSet sp = s, sm = s;
      sp.points[j].x[d] += h;
      sm.points[j].x[d] -= h;
      const double fd =
          (dm_loss(real, sp, phi, kClf, clf, 0.1) - dm_loss(real, sm, phi, kClf, clf, 0.1)) /
          (2 * h);
      const double scale = std::max({1e-8, std::abs(fd), std::abs(grads[j][d])});
      CHECK(std::abs(grads[j][d] - fd) / scale < 1e-4);
    }
  }
}

TEST_CASE("zero step size leaves coordinates bitwise unchanged") {
  Rng rng(5);
  const NetSpec phi_spec{{2, 4, 3}, Activation::Tanh};
  NetParams clf = init_params(kClf, rng);
  std::vector<Example> real{{{1, 2}, 0}, {{2, 1}, 0}};
  const CondensedSet s = make_set({{{0.5, 0.5}, 0}});
  DmConfig cfg;
  cfg.lr_s = 0.0;
  cfg.n_random_nets = 2;
  const CondensedSet out = condense_step(s, real, rng, cfg, phi_spec, kClf, clf);
  CHECK(out.points[0].x == s.points[0].x);
}

TEST_CASE("descent under a frozen identity net strictly shrinks the gap") {
  const RandomFeatureNet phi = identity_phi(2);
  const NetParams clf = zeros_like(kClf);
  std::vector<Example> real{{{2, 2}, 0}, {{4, 4}, 0}};  // mean [3,3]
  CondensedSet s = make_set({{{0, 0}, 0}});
  double prev = dm_loss(real, s, phi, kClf, clf, 0.0);
  for (int step = 0; step < 5; ++step) {
    const auto g = dm_loss_grads(real, s, phi, kClf, clf, 0.0);
    for (std::size_t j = 0; j < s.points.size(); ++j) vec_add_scaled(s.points[j].x, g[j], -0.1);
    const double cur = dm_loss(real, s, phi, kClf, clf, 0.0);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("condense_step with sampled nets reduces the expected gap on average") {
  Rng rng(23);
  const NetSpec phi_spec{{2, 6, 4}, Activation::Tanh};
  NetParams clf = init_params(kClf, rng);
  std::vector<Example> real;
  for (int i = 0; i < 20; ++i)
    real.push_back({{rng.normal() + 3.0, rng.normal() - 1.0}, 0});
  CondensedSet s = make_set({{{0.0, 0.0}, 0}, {{0.5, 0.5}, 0}});
  DmConfig cfg;
  cfg.steps = 30;
  cfg.lr_s = 0.05;
  cfg.upsilon = 0.0;

  auto avg_gap = [&](const CondensedSet& set) {
    // Average the loss over a bag of fresh nets as a proxy for the expectation.
    Rng eval_rng(999);
    double acc = 0;
    for (int i = 0; i < 16; ++i)
      acc += dm_loss(real, set, sample_feature_net(phi_spec, eval_rng), kClf, clf, 0.0);
    return acc / 16;
  };

  const double before = avg_gap(s);
  for (int i = 0; i < cfg.steps; ++i) s = condense_step(s, real, rng, cfg, phi_spec, kClf, clf);
  CHECK(avg_gap(s) < before);
}

TEST_CASE("generate_condensed covers shard classes with ipc points each") {
  Rng rng(13);
  NetParams clf = init_params(kClf, rng);
  const NetSpec phi_spec{{2, 4, 3}, Activation::Tanh};
  std::vector<Example> real;
  for (int i = 0; i < 9; ++i) real.push_back({{rng.uniform(-1, 1), rng.uniform(-1, 1)}, 0});
  for (int i = 0; i < 2; ++i) real.push_back({{rng.uniform(-1, 1), rng.uniform(-1, 1)}, 2});
  DmConfig cfg;
  cfg.ipc = 4;
  cfg.steps = 2;
  const CondensedSet s = generate_condensed(real, cfg, rng, phi_spec, kClf, clf, 7);
  CHECK(s.round_tag == 7);
  int c0 = 0, c2 = 0;
  for (const auto& e : s.points) {
    if (e.y == 0) c0++;
    if (e.y == 2) c2++;  // thin class sampled with replacement
    CHECK((e.y == 0 || e.y == 2));
  }
  CHECK(c0 == 4);
  CHECK(c2 == 4);
}

TEST_CASE("labels are never mutated by optimisation") {
  Rng rng(29);
  NetParams clf = init_params(kClf, rng);
  const NetSpec phi_spec{{2, 4, 3}, Activation::Tanh};
  std::vector<Example> real;
  for (int i = 0; i < 12; ++i) real.push_back({{rng.uniform(-1, 1), rng.uniform(-1, 1)}, i % 3});
  DmConfig cfg;
  cfg.ipc = 2;
  cfg.steps = 0;
  CondensedSet s = generate_condensed(real, cfg, rng, phi_spec, kClf, clf, 0);
  const std::vector<int> labels_before = [&] {
    std::vector<int> v;
    for (const auto& e : s.points) v.push_back(e.y);
    return v;
  }();
  for (int i = 0; i < 10; ++i) s = condense_step(s, real, rng, cfg, phi_spec, kClf, clf);
  for (std::size_t i = 0; i < s.points.size(); ++i) CHECK(s.points[i].y == labels_before[i]);
}

TEST_CASE("with zero steps the set is made of real shard points") {
  Rng rng(31);
  NetParams clf = init_params(kClf, rng);
  const NetSpec phi_spec{{2, 4, 3}, Activation::Tanh};
  std::vector<Example> real;
  for (int i = 0; i < 10; ++i) real.push_back({{rng.uniform(-1, 1), rng.uniform(-1, 1)}, 0});
  DmConfig cfg;
  cfg.ipc = 3;
  cfg.steps = 0;
  const CondensedSet s = generate_condensed(real, cfg, rng, phi_spec, kClf, clf, 0);
  for (const auto& e : s.points) {
    bool found = false;
    for (const auto& r : real)
      if (r.x == e.x && r.y == e.y) found = true;
    CHECK(found);
  }
}

TEST_CASE("generation is deterministic for a fixed seed") {
  const NetSpec phi_spec{{2, 4, 3}, Activation::Tanh};
  std::vector<Example> real;
  Rng data_rng(37);
  for (int i = 0; i < 10; ++i)
    real.push_back({{data_rng.uniform(-1, 1), data_rng.uniform(-1, 1)}, i % 2});
  NetParams clf;
  {
    Rng r(1);
    clf = init_params(kClf, r);
  }
  DmConfig cfg;
  cfg.ipc = 2;
  cfg.steps = 5;
  Rng r1(42), r2(42);
  const CondensedSet a = generate_condensed(real, cfg, r1, phi_spec, kClf, clf, 0);
  const CondensedSet b = generate_condensed(real, cfg, r2, phi_spec, kClf, clf, 0);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].x == b.points[i].x);
    CHECK(a.points[i].y == b.points[i].y);
  }
}

TEST_CASE("condensed points train a better model than a random subset") {
  // Paired comparison over 10 seeds: train a fresh classifier on the
  // condensed set vs on an equally sized random subset of the shard, then
  // score both on held-out points from the same blobs.
  const NetSpec phi_spec{{4, 8, 6}, Activation::Tanh};
  const NetSpec clf_spec{{4, 8, 2}, Activation::Tanh};
  double err_condensed = 0.0, err_random = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(500 + seed);
    const Dataset train = gen_blobs(2, 4, 40, 4.0, rng);
    const Dataset held = gen_blobs(2, 4, 40, 4.0, rng);
    NetParams clf = init_params(clf_spec, rng);

    DmConfig cfg;
    cfg.ipc = 5;
    cfg.steps = 40;
    cfg.lr_s = 0.05;
    cfg.upsilon = 0.1;
    const CondensedSet s = generate_condensed(train.points, cfg, rng, phi_spec, clf_spec, clf, 0);

    std::vector<Example> random_subset;
    {
      std::vector<std::size_t> idx(train.points.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      rng.shuffle(idx);
      for (std::size_t i = 0; i < s.points.size(); ++i)
        random_subset.push_back(train.points[idx[i]]);
    }

    auto train_and_score = [&](const std::vector<Example>& pts) {
      NetParams w = init_params(clf_spec, rng);
      std::vector<TrainSample> batch;
      for (const auto& e : pts) {
        Vec t(2, 0.0);
        t[e.y] = 1.0;
        batch.push_back({e.x, t});
      }
      for (int epoch = 0; epoch < 80; ++epoch) {
        NetParams g = zeros_like(clf_spec);
        backward_ce(clf_spec, w, batch, g);
        axpy_params(w, g, -0.5);
      }
      int wrong = 0;
      for (const auto& e : held.points)
        if (static_cast<int>(argmax_index(forward(clf_spec, w, e.x))) != e.y) wrong++;
      return static_cast<double>(wrong) / held.points.size();
    };

    err_condensed += train_and_score(s.points);
    err_random += train_and_score(random_subset);
  }
  CHECK(err_condensed <= err_random + 1e-9);
}

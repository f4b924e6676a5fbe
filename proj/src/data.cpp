#include "fedidm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fedidm {

namespace {

// Class mean for blob k: separation * s on axis (k % dim), where s walks
// +1, -1, +2, -2, ... as k wraps around the axes. Any two means are at
// least `separation` apart.
Vec blob_mean(int k, int dim, double separation) {
  Vec mu(dim, 0.0);
  const int axis = k % dim;
  const int wrap = k / dim;
  const double magnitude = 1.0 + static_cast<double>(wrap / 2);
  const double sign = (wrap % 2 == 0) ? 1.0 : -1.0;
  mu[axis] = separation * sign * magnitude;
  return mu;
}

}  // namespace

Dataset gen_blobs(int k_classes, int input_dim, int n_per_class, double separation, Rng& rng) {
  if (k_classes < 2) throw std::invalid_argument("gen_blobs: need at least 2 classes");
  if (input_dim < 1 || n_per_class < 1)
    throw std::invalid_argument("gen_blobs: dimensions and counts must be positive");
  if (!(separation > 0.0)) throw std::invalid_argument("gen_blobs: separation must be positive");

  Dataset ds;
  ds.k_classes = k_classes;
  ds.input_dim = input_dim;
  ds.points.reserve(static_cast<std::size_t>(k_classes) * n_per_class);
  for (int c = 0; c < k_classes; ++c) {
    const Vec mu = blob_mean(c, input_dim, separation);
    for (int i = 0; i < n_per_class; ++i) {
      Example e;
      e.y = c;
      e.x.resize(input_dim);
      for (int d = 0; d < input_dim; ++d) e.x[d] = mu[d] + rng.normal();
      ds.points.push_back(std::move(e));
    }
  }
  return ds;
}

Partition dirichlet_partition(const Dataset& ds, int n_clients, double concentration, Rng& rng) {
  if (n_clients < 1) throw std::invalid_argument("dirichlet_partition: need at least one client");
  if (static_cast<std::size_t>(n_clients) > ds.points.size())
    throw std::invalid_argument("dirichlet_partition: n_clients exceeds dataset size");
  if (!(concentration > 0.0))
    throw std::invalid_argument("dirichlet_partition: concentration must be positive");

  Partition part;
  part.concentration = concentration;
  part.client_shards.assign(n_clients, {});

  for (int c = 0; c < ds.k_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.points.size(); ++i)
      if (ds.points[i].y == c) idx.push_back(i);
    if (idx.empty()) continue;
    rng.shuffle(idx);

    const std::vector<double> props = rng.dirichlet(concentration, n_clients);
    const std::size_t n_c = idx.size();
    // Largest-remainder apportionment keeps counts integral and summing to n_c.
    std::vector<std::size_t> counts(n_clients);
    std::vector<std::pair<double, int>> frac(n_clients);
    std::size_t assigned = 0;
    for (int i = 0; i < n_clients; ++i) {
      const double want = props[i] * static_cast<double>(n_c);
      counts[i] = static_cast<std::size_t>(std::floor(want));
      assigned += counts[i];
      frac[i] = {want - std::floor(want), i};
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const std::size_t remainder = assigned < n_c ? n_c - assigned : 0;
    for (std::size_t r = 0; r < remainder; ++r) counts[frac[r % frac.size()].second] += 1;

    std::size_t pos = 0;
    for (int i = 0; i < n_clients; ++i) {
      for (std::size_t j = 0; j < counts[i]; ++j) part.client_shards[i].push_back(idx[pos++]);
    }
  }

  for (auto& shard : part.client_shards) std::sort(shard.begin(), shard.end());

  // Repair empty shards by moving one point from the currently largest one.
  for (int i = 0; i < n_clients; ++i) {
    while (part.client_shards[i].empty()) {
      int donor = -1;
      std::size_t best = 1;
      for (int j = 0; j < n_clients; ++j) {
        if (part.client_shards[j].size() > best) {
          best = part.client_shards[j].size();
          donor = j;
        }
      }
      if (donor < 0)
        throw std::runtime_error("dirichlet_partition: cannot repair empty shard");
      part.client_shards[i].push_back(part.client_shards[donor].back());
      part.client_shards[donor].pop_back();
    }
    std::sort(part.client_shards[i].begin(), part.client_shards[i].end());
  }
  return part;
}

Vec augment(const Vec& x, Rng& rng, const AugmentConfig& cfg) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + cfg.sigma * rng.normal();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (rng.next_double() < cfg.mask_prob) out[i] = 0.0;
  return out;
}

AugmentedPair augment_pair(const Vec& x, Rng& rng, const AugmentConfig& cfg) {
  AugmentedPair p;
  p.s1 = augment(x, rng, cfg);
  p.s2 = augment(x, rng, cfg);
  return p;
}

MixupResult mixup_with_rho(const Vec& si, const Vec& sj, const Vec& yi, const Vec& yj,
                           double rho) {
  if (si.size() != sj.size() || yi.size() != yj.size())
    throw std::invalid_argument("mixup: length mismatch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("mixup: rho must lie in [0, 1]");
  MixupResult r;
  r.x.resize(si.size());
  for (std::size_t i = 0; i < si.size(); ++i) r.x[i] = rho * si[i] + (1.0 - rho) * sj[i];
  r.y.resize(yi.size());
  for (std::size_t k = 0; k < yi.size(); ++k) r.y[k] = rho * yi[k] + (1.0 - rho) * yj[k];
  return r;
}

MixupResult mixup(const Vec& si, const Vec& sj, const Vec& yi, const Vec& yj, Rng& rng,
                  double alpha) {
  return mixup_with_rho(si, sj, yi, yj, rng.beta(alpha, alpha));
}

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << ds.input_dim << "," << ds.k_classes << "\n";
  char buf[40];
  for (const Example& e : ds.points) {
    for (double v : e.x) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << buf << ",";
    }
    out << e.y << "\n";
  }
}

Dataset read_dataset_csv(std::istream& in) {
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset csv: missing header");
  {
    std::istringstream hs(line);
    char comma;
    if (!(hs >> ds.input_dim >> comma >> ds.k_classes) || comma != ',')
      throw std::runtime_error("dataset csv: bad header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Example e;
    e.x.resize(ds.input_dim);
    std::string cell;
    for (int d = 0; d < ds.input_dim; ++d) {
      if (!std::getline(ls, cell, ',')) throw std::runtime_error("dataset csv: short row");
      e.x[d] = std::stod(cell);
    }
    if (!std::getline(ls, cell, ',')) throw std::runtime_error("dataset csv: missing label");
    e.y = std::stoi(cell);
    if (e.y < 0 || e.y >= ds.k_classes) throw std::runtime_error("dataset csv: label out of range");
    ds.points.push_back(std::move(e));
  }
  return ds;
}

}  // namespace fedidm

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fedagg/core.hpp"
#include "fedagg/rng.hpp"

namespace fedagg {

enum class DistanceMetric { l2, dimkrum_topk };

struct DistanceMatrix {
  size_t n = 0;
  DistanceMetric metric = DistanceMetric::l2;
  std::vector<double> entries;  // row-major n*n, symmetric, zero diagonal

  double at(size_t i, size_t j) const { return entries[i * n + j]; }
  double& at(size_t i, size_t j) { return entries[i * n + j]; }
};

using DisSumVector = std::vector<double>;

enum class KrumVariant { krum, multikrum, bulyan, dimkrum };

struct DimKrumConfig {
  double rho = 1e-3;    // fraction of dimensions entering each pair distance
  double alpha = 0.9;   // memory coefficient
  double lambda = 5.0;  // adaptive noise scale
  KrumVariant variant = KrumVariant::dimkrum;

  void validate() const {
    if (!(rho > 0.0 && rho <= 1.0))
      throw std::invalid_argument("rho must be in (0, 1]");
    if (!(alpha >= 0.0 && alpha < 1.0))
      throw std::invalid_argument("alpha must be in [0, 1)");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  }
};

// Distance-sum memory, reset at experiment start.
struct MemoryState {
  std::vector<double> dis_mem;
  explicit MemoryState(size_t n = 0) : dis_mem(n, 0.0) {}
};

struct SelectionReport {
  DistanceMatrix distances;
  std::vector<std::vector<int>> neighbor_sets;  // each sorted ascending, contains i
  DisSumVector dis_sums;                        // post-memory values
  int i_star = -1;
  std::vector<int> selected;  // sorted ascending
  std::vector<double> weights_p;
};

struct AggregationOutcome {
  UpdateVector aggregate;
  std::vector<double> weights_p;
  std::optional<SelectionReport> report;
};

// Neighborhood size ceil((n+1)/2); every client's own index counts.
inline size_t neighbor_count(size_t n) { return (n + 2) / 2; }

// K = max(1, floor(rho * d)).
inline int topk_count(double rho, size_t dim) {
  int k = static_cast<int>(std::floor(rho * static_cast<double>(dim)));
  if (k < 1) k = 1;
  if (k > static_cast<int>(dim)) k = static_cast<int>(dim);
  return k;
}

// The K dimensions with the largest absolute coordinate difference, ties
// broken toward the lower index. Returned sorted ascending.
inline std::vector<int> topk_dims(const UpdateVector& xi, const UpdateVector& xj, int K) {
  if (xi.size() != xj.size())
    throw std::invalid_argument("topk_dims: dimension mismatch");
  const int d = static_cast<int>(xi.size());
  if (K < 1 || K > d) throw std::invalid_argument("topk_dims: K must be in [1, d]");
  std::vector<int> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + K, idx.end(), [&](int a, int b) {
    double da = std::abs(xi[a] - xj[a]);
    double db = std::abs(xi[b] - xj[b]);
    if (da != db) return da > db;
    return a < b;
  });
  idx.resize(K);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Mean absolute difference over the top-K dimensions. Symmetric in (i, j).
inline double dimkrum_distance(const UpdateVector& xi, const UpdateVector& xj, int K) {
  std::vector<int> dims = topk_dims(xi, xj, K);
  double s = 0.0;
  for (int l : dims) s += std::abs(xi[l] - xj[l]);
  return s / static_cast<double>(K);
}

inline DistanceMatrix pairwise_l2(const ClientRoundSet& set) {
  set.validate();
  const size_t n = set.n();
  DistanceMatrix D;
  D.n = n;
  D.metric = DistanceMetric::l2;
  D.entries.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      double d = l2_distance(set.updates[i], set.updates[j]);
      D.at(i, j) = d;
      D.at(j, i) = d;
    }
  }
  return D;
}

inline DistanceMatrix pairwise_dimkrum(const ClientRoundSet& set, int K) {
  set.validate();
  const size_t n = set.n();
  DistanceMatrix D;
  D.n = n;
  D.metric = DistanceMetric::dimkrum_topk;
  D.entries.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      double d = dimkrum_distance(set.updates[i], set.updates[j], K);
      D.at(i, j) = d;
      D.at(j, i) = d;
    }
  }
  return D;
}

// N_i: the ceil((n+1)/2) indices with the smallest d_ij, always containing i,
// remaining ties broken toward the lower index.
inline std::vector<std::vector<int>> neighbor_sets(const DistanceMatrix& D) {
  const size_t n = D.n;
  const size_t m = neighbor_count(n);
  std::vector<std::vector<int>> sets(n);
  std::vector<int> others;
  others.reserve(n - 1);
  for (size_t i = 0; i < n; ++i) {
    others.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(static_cast<int>(j));
    }
    std::sort(others.begin(), others.end(), [&](int a, int b) {
      double da = D.at(i, a);
      double db = D.at(i, b);
      if (da != db) return da < db;
      return a < b;
    });
    std::vector<int> nb;
    nb.reserve(m);
    nb.push_back(static_cast<int>(i));
    for (size_t k = 0; k + 1 < m && k < others.size(); ++k) nb.push_back(others[k]);
    std::sort(nb.begin(), nb.end());
    sets[i] = std::move(nb);
  }
  return sets;
}

inline DisSumVector dis_sums(const DistanceMatrix& D,
                             const std::vector<std::vector<int>>& neighbors) {
  if (neighbors.size() != D.n)
    throw std::invalid_argument("dis_sums: neighbor sets do not match matrix");
  DisSumVector out(D.n, 0.0);
  for (size_t i = 0; i < D.n; ++i) {
    double s = 0.0;
    for (int j : neighbors[i]) s += D.at(i, static_cast<size_t>(j));
    out[i] = s;
  }
  return out;
}

// Exponential distance-sum estimate: out = raw + alpha * mem, and the
// post-memory value is what gets stored back.
inline DisSumVector apply_memory(const DisSumVector& raw, MemoryState& mem, double alpha) {
  if (raw.size() != mem.dis_mem.size())
    throw std::invalid_argument("apply_memory: length mismatch");
  DisSumVector out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] + alpha * mem.dis_mem[i];
  mem.dis_mem = out;
  return out;
}

namespace detail {

inline int argmin_lowest_index(const std::vector<double>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = static_cast<int>(i);
  }
  return best;
}

// One Krum pass restricted to `pool` (original indices); returns the pool
// member with the smallest distance-sum under the pool's own neighbor rule.
inline int krum_choose_from_pool(const DistanceMatrix& D, const std::vector<int>& pool) {
  const size_t np = pool.size();
  const size_t mp = neighbor_count(np);
  int best = -1;
  double best_sum = 0.0;
  for (size_t a = 0; a < np; ++a) {
    int i = pool[a];
    std::vector<double> ds;
    ds.reserve(np);
    std::vector<int> others;
    for (size_t b = 0; b < np; ++b) {
      if (b != a) others.push_back(pool[b]);
    }
    std::sort(others.begin(), others.end(), [&](int x, int y) {
      double dx = D.at(i, x);
      double dy = D.at(i, y);
      if (dx != dy) return dx < dy;
      return x < y;
    });
    double s = 0.0;  // own distance is zero
    for (size_t k = 0; k + 1 < mp && k < others.size(); ++k) s += D.at(i, others[k]);
    if (best < 0 || s < best_sum || (s == best_sum && i < best)) {
      best = i;
      best_sum = s;
    }
  }
  return best;
}

}  // namespace detail

// Selection stage shared by the Krum family. Variant krum keeps {i*},
// multikrum keeps N_{i*}, bulyan accumulates iterated Krum picks, and dimkrum
// runs the Multi-Krum rule on top-K dimension-restricted distances with the
// memory mechanism applied before the argmin.
inline SelectionReport select(const ClientRoundSet& set, const DimKrumConfig& cfg,
                              MemoryState& mem) {
  set.validate();
  cfg.validate();
  const size_t n = set.n();
  if (mem.dis_mem.size() != n)
    throw std::invalid_argument("select: memory state length does not match round");
  const size_t m = neighbor_count(n);

  SelectionReport rep;
  if (cfg.variant == KrumVariant::dimkrum) {
    rep.distances = pairwise_dimkrum(set, topk_count(cfg.rho, set.dim()));
  } else {
    rep.distances = pairwise_l2(set);
  }
  rep.neighbor_sets = neighbor_sets(rep.distances);
  DisSumVector raw = dis_sums(rep.distances, rep.neighbor_sets);
  rep.dis_sums = (cfg.variant == KrumVariant::dimkrum)
                     ? apply_memory(raw, mem, cfg.alpha)
                     : raw;

  std::vector<int> selected;
  if (cfg.variant == KrumVariant::bulyan) {
    if (n < 3) throw std::invalid_argument("bulyan needs at least three clients");
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    while (selected.size() < m) {
      int pick = detail::krum_choose_from_pool(rep.distances, pool);
      selected.push_back(pick);
      pool.erase(std::find(pool.begin(), pool.end(), pick));
    }
    rep.i_star = selected.front();
  } else {
    rep.i_star = detail::argmin_lowest_index(rep.dis_sums);
    if (cfg.variant == KrumVariant::krum) {
      selected = {rep.i_star};
    } else {
      selected = rep.neighbor_sets[rep.i_star];
    }
  }
  std::sort(selected.begin(), selected.end());
  rep.selected = selected;

  rep.weights_p.assign(n, 0.0);
  for (int i : selected) rep.weights_p[static_cast<size_t>(i)] = 1.0 / selected.size();
  return rep;
}

// Server-side adaptive noise: per-dimension N(0, (lambda * sigma_i)^2) where
// sigma_i is the unbiased standard deviation over the selected clients'
// updates. Skipped entirely in the final round.
inline UpdateVector adaptive_noise(const UpdateVector& agg, const ClientRoundSet& set,
                                   const std::vector<int>& S, double lambda, Rng& rng,
                                   bool is_last_round) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (is_last_round || lambda == 0.0) return agg;
  if (S.size() < 2)
    throw std::invalid_argument("adaptive noise needs at least two selected clients");
  set.validate();
  if (agg.size() != set.dim())
    throw std::invalid_argument("aggregate dimension does not match round");
  for (int s : S) {
    if (s < 0 || static_cast<size_t>(s) >= set.n())
      throw std::invalid_argument("selected index out of range");
  }

  UpdateVector out(agg.size());
  const double inv = 1.0 / static_cast<double>(S.size());
  for (size_t i = 0; i < agg.size(); ++i) {
    double mean = 0.0;
    for (int s : S) mean += set.updates[static_cast<size_t>(s)][i];
    mean *= inv;
    double var = 0.0;
    for (int s : S) {
      double dev = set.updates[static_cast<size_t>(s)][i] - mean;
      var += dev * dev;
    }
    var /= static_cast<double>(S.size() - 1);
    out[i] = agg[i] + rng.gaussian() * (lambda * std::sqrt(var));
  }
  return out;
}

}  // namespace fedagg

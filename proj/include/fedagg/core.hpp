#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedagg {

// One client's local parameter delta for a round. All aggregators consume and
// produce these flat vectors; there is no per-layer structure.
using UpdateVector = std::vector<double>;

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// The updates gathered by the server in one round.
struct ClientRoundSet {
  int round = 0;
  std::vector<UpdateVector> updates;
  std::vector<int> client_ids;

  size_t n() const { return updates.size(); }
  size_t dim() const { return updates.empty() ? 0 : updates[0].size(); }

  void validate() const {
    if (round < 0) throw std::invalid_argument("round must be non-negative");
    if (updates.size() < 2)
      throw std::invalid_argument("a round needs at least two clients");
    if (client_ids.size() != updates.size())
      throw std::invalid_argument("client_ids length does not match updates");
    const size_t d = updates[0].size();
    for (const auto& u : updates) {
      if (u.size() != d)
        throw std::invalid_argument("dimension mismatch among client updates");
      if (!all_finite(u))
        throw std::invalid_argument("client update contains a non-finite value");
    }
    std::vector<int> ids = client_ids;
    std::sort(ids.begin(), ids.end());
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0) throw std::invalid_argument("client ids must be non-negative");
      if (i > 0 && ids[i] == ids[i - 1])
        throw std::invalid_argument("client ids must be distinct");
    }
  }
};

struct ServerState {
  std::vector<double> weights;
  int round = 0;
};

// Convex combination of the round's updates. Summation runs in ascending
// client-id order with one accumulator per dimension, so the result is
// bit-identical under any permutation of the inputs.
inline UpdateVector weighted_aggregate(const ClientRoundSet& set,
                                       const std::vector<double>& p) {
  set.validate();
  if (p.size() != set.n())
    throw std::invalid_argument("weight vector length does not match client count");
  double sum = 0.0;
  for (double w : p) {
    if (!(w >= 0.0))
      throw std::invalid_argument("aggregation weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("aggregation weights must sum to 1");

  std::vector<size_t> order(set.n());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return set.client_ids[a] < set.client_ids[b];
  });

  UpdateVector out(set.dim(), 0.0);
  for (size_t k : order) {
    const UpdateVector& u = set.updates[k];
    const double w = p[k];
    for (size_t j = 0; j < out.size(); ++j) out[j] += w * u[j];
  }
  return out;
}

inline ServerState apply_update(const ServerState& server, const UpdateVector& agg) {
  if (server.weights.size() != agg.size())
    throw std::invalid_argument("aggregate dimension does not match server weights");
  ServerState out = server;
  for (size_t j = 0; j < out.weights.size(); ++j) out.weights[j] += agg[j];
  out.round += 1;
  return out;
}

inline double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace fedagg

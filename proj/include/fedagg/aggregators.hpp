#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedagg/core.hpp"
#include "fedagg/krum.hpp"
#include "fedagg/rng.hpp"

namespace fedagg {

inline AggregationOutcome fedavg(const ClientRoundSet& set) {
  set.validate();
  AggregationOutcome out;
  out.weights_p.assign(set.n(), 1.0 / static_cast<double>(set.n()));
  out.aggregate = weighted_aggregate(set, out.weights_p);
  return out;
}

// Dimension-wise median; even n takes the midpoint of the central order
// statistics. weights_p carries the uniform vector by convention.
inline AggregationOutcome coordinate_median(const ClientRoundSet& set) {
  set.validate();
  const size_t n = set.n();
  AggregationOutcome out;
  out.weights_p.assign(n, 1.0 / static_cast<double>(n));
  out.aggregate.resize(set.dim());
  std::vector<double> col(n);
  for (size_t j = 0; j < set.dim(); ++j) {
    for (size_t i = 0; i < n; ++i) col[i] = set.updates[i][j];
    std::sort(col.begin(), col.end());
    out.aggregate[j] =
        (n % 2 == 1) ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return out;
}

namespace detail {

inline double sum_of_distances(const std::vector<double>& y,
                               const std::vector<UpdateVector>& pts) {
  double s = 0.0;
  for (const auto& x : pts) s += l2_distance(y, x);
  return s;
}

}  // namespace detail

// Geometric median by Weiszfeld iteration, initialized at the coordinate
// mean. If an iterate lands on a data point the subgradient condition decides
// between returning it and stepping off by 1e-9. Objective values per iterate
// can be captured through `objective_trace`.
inline AggregationOutcome geometric_median(const ClientRoundSet& set, double tol = 1e-9,
                                           int max_iter = 1000,
                                           std::vector<double>* objective_trace = nullptr) {
  set.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be positive");
  const size_t n = set.n();
  const size_t d = set.dim();
  constexpr double kSingular = 1e-12;

  std::vector<double> y(d, 0.0);
  for (const auto& u : set.updates)
    for (size_t j = 0; j < d; ++j) y[j] += u[j];
  for (size_t j = 0; j < d; ++j) y[j] /= static_cast<double>(n);

  if (objective_trace) {
    objective_trace->clear();
    objective_trace->push_back(detail::sum_of_distances(y, set.updates));
  }

  std::vector<double> next(d);
  for (int it = 0; it < max_iter; ++it) {
    // Distances from the current iterate; detect coincidence with a data point.
    std::vector<double> dist(n);
    int at_point = -1;
    for (size_t i = 0; i < n; ++i) {
      dist[i] = l2_distance(y, set.updates[i]);
      if (dist[i] < kSingular && at_point < 0) at_point = static_cast<int>(i);
    }

    if (at_point >= 0) {
      // Subgradient condition at a data point: optimal iff the pull of the
      // remaining points has norm <= 1.
      std::vector<double> pull(d, 0.0);
      bool any = false;
      for (size_t i = 0; i < n; ++i) {
        if (dist[i] < kSingular) continue;
        any = true;
        for (size_t j = 0; j < d; ++j)
          pull[j] += (set.updates[i][j] - y[j]) / dist[i];
      }
      if (!any || l2_norm(pull) <= 1.0) break;
      double pn = l2_norm(pull);
      for (size_t j = 0; j < d; ++j) y[j] += 1e-9 * pull[j] / pn;
      if (objective_trace)
        objective_trace->push_back(detail::sum_of_distances(y, set.updates));
      continue;
    }

    double wsum = 0.0;
    std::fill(next.begin(), next.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      double w = 1.0 / dist[i];
      wsum += w;
      for (size_t j = 0; j < d; ++j) next[j] += w * set.updates[i][j];
    }
    for (size_t j = 0; j < d; ++j) next[j] /= wsum;

    double step = l2_distance(next, y);
    y = next;
    if (objective_trace)
      objective_trace->push_back(detail::sum_of_distances(y, set.updates));
    if (step < tol) break;
  }

  AggregationOutcome out;
  out.weights_p.assign(n, 1.0 / static_cast<double>(n));
  out.aggregate = y;
  return out;
}

struct CrflConfig {
  double noise_std = 0.01;
  double bound_slope = 0.05;
  double bound_intercept = 2.0;

  void validate() const {
    if (!(noise_std > 0.0)) throw std::invalid_argument("crfl noise_std must be positive");
    if (!(bound_slope > 0.0) || !(bound_intercept > 0.0))
      throw std::invalid_argument("crfl bound parameters must be positive");
  }
};

// CRFL post-processing on top of the RFA aggregate: Gaussian noise on the
// update, then projection of the candidate weights w + agg onto the ball
// ||w||_2 <= slope * t + intercept. Both steps are skipped in the last round.
inline UpdateVector crfl_postprocess(const UpdateVector& agg, const ServerState& server,
                                     const CrflConfig& cfg, Rng& rng, bool is_last_round) {
  cfg.validate();
  if (agg.size() != server.weights.size())
    throw std::invalid_argument("aggregate dimension does not match server weights");
  if (is_last_round) return agg;

  const int t = server.round + 1;
  const double bound = cfg.bound_slope * static_cast<double>(t) + cfg.bound_intercept;

  std::vector<double> candidate(agg.size());
  for (size_t j = 0; j < agg.size(); ++j)
    candidate[j] = server.weights[j] + agg[j] + cfg.noise_std * rng.gaussian();

  double nrm = l2_norm(candidate);
  if (nrm > bound) {
    double f = bound / nrm;
    for (double& c : candidate) c *= f;
  }
  for (size_t j = 0; j < candidate.size(); ++j) candidate[j] -= server.weights[j];
  return candidate;
}

struct FoolsGoldHistory {
  std::vector<UpdateVector> cumulative;  // running per-client sums

  void accumulate(const ClientRoundSet& set) {
    if (cumulative.empty()) cumulative.assign(set.n(), UpdateVector(set.dim(), 0.0));
    if (cumulative.size() != set.n() || cumulative[0].size() != set.dim())
      throw std::invalid_argument("foolsgold history shape does not match round");
    for (size_t i = 0; i < set.n(); ++i)
      for (size_t j = 0; j < set.dim(); ++j) cumulative[i][j] += set.updates[i][j];
  }
};

namespace detail {

inline double cosine_similarity(const UpdateVector& a, const UpdateVector& b) {
  double dot = 0.0;
  for (size_t j = 0; j < a.size(); ++j) dot += a[j] * b[j];
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (na * nb);
}

}  // namespace detail

// FoolsGold-style similarity reweighting over cumulative histories: pairwise
// cosine similarity, pardoning rescale, alpha_i = 1 - max similarity, logit
// squash, then normalization to a probability vector.
inline AggregationOutcome foolsgold_weights(const ClientRoundSet& set,
                                            const FoolsGoldHistory& hist) {
  set.validate();
  const size_t n = set.n();
  if (hist.cumulative.size() != n || hist.cumulative[0].size() != set.dim())
    throw std::invalid_argument("foolsgold history shape does not match round");

  std::vector<double> cs(n * n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      if (i != j) cs[i * n + j] = detail::cosine_similarity(hist.cumulative[i],
                                                            hist.cumulative[j]);

  std::vector<double> vmax(n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      if (i != j) vmax[i] = std::max(vmax[i], cs[i * n + j]);

  // Pardoning: discount similarity toward clients that look more aligned.
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i != j && vmax[j] > vmax[i] && vmax[j] > 0.0)
        cs[i * n + j] *= vmax[i] / vmax[j];
    }
  }

  std::vector<double> alpha(n, 1.0);
  for (size_t i = 0; i < n; ++i) {
    double mx = 0.0;
    for (size_t j = 0; j < n; ++j)
      if (i != j) mx = std::max(mx, cs[i * n + j]);
    alpha[i] = std::clamp(1.0 - mx, 0.0, 1.0);
  }

  double amax = *std::max_element(alpha.begin(), alpha.end());
  if (amax > 0.0) {
    for (double& a : alpha) a /= amax;
  }

  // Logit squash, clipped to [0, 1]; alpha = 1 maps to 1, alpha = 0 to 0.
  for (double& a : alpha) {
    if (a >= 1.0) {
      a = 1.0;
    } else if (a <= 0.0) {
      a = 0.0;
    } else {
      a = std::clamp(std::log(a / (1.0 - a)) + 0.5, 0.0, 1.0);
    }
  }

  double total = 0.0;
  for (double a : alpha) total += a;
  AggregationOutcome out;
  if (total <= 0.0) {
    out.weights_p.assign(n, 1.0 / static_cast<double>(n));
  } else {
    out.weights_p.resize(n);
    for (size_t i = 0; i < n; ++i) out.weights_p[i] = alpha[i] / total;
  }
  // Renormalize exactly to absorb rounding.
  double s = 0.0;
  for (double w : out.weights_p) s += w;
  for (double& w : out.weights_p) w /= s;
  out.aggregate = weighted_aggregate(set, out.weights_p);
  return out;
}

// Residual-based weights: r_i = ||x_i - coordinate median||_2 and
// p_i proportional to 1 / (1 + r_i / median(r)); all-zero residual medians
// fall back to uniform weights.
inline AggregationOutcome residual_weights(const ClientRoundSet& set) {
  set.validate();
  const size_t n = set.n();
  AggregationOutcome med = coordinate_median(set);

  std::vector<double> r(n);
  for (size_t i = 0; i < n; ++i) r[i] = l2_distance(set.updates[i], med.aggregate);

  std::vector<double> sorted = r;
  std::sort(sorted.begin(), sorted.end());
  double med_r = (n % 2 == 1) ? sorted[n / 2]
                              : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  AggregationOutcome out;
  if (med_r == 0.0) {
    out.weights_p.assign(n, 1.0 / static_cast<double>(n));
  } else {
    out.weights_p.resize(n);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      out.weights_p[i] = 1.0 / (1.0 + r[i] / med_r);
      total += out.weights_p[i];
    }
    for (double& w : out.weights_p) w /= total;
  }
  out.aggregate = weighted_aggregate(set, out.weights_p);
  return out;
}

}  // namespace fedagg

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fedagg/core.hpp"
#include "fedagg/krum.hpp"
#include "fedagg/rng.hpp"

namespace fedagg {

// Standard normal CDF via erfc; absolute error below 1e-12 over the full range.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Probability that a single backdoored dimension looks closer to the clean
// mean than a clean draw does: 2 * Phi(a) * Phi(-a) with a = delta / (sqrt(2) sigma).
// Even in delta, maximal value 0.5 at delta = 0.
inline double single_dim_error_prob(double delta, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  double a = delta / (std::sqrt(2.0) * sigma);
  return 2.0 * normal_cdf(a) * normal_cdf(-a);
}

// Parameters of the Gaussian demo case: clean updates are N(mu_i, sigma_i^2)
// per dimension and the backdoored update adds delta_i on the support.
struct GaussianDemoSpec {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> delta;
  std::vector<int> support;  // indices with delta != 0, sorted ascending

  size_t dim() const { return mu.size(); }

  void validate() const {
    if (mu.empty() || sigma.size() != mu.size() || delta.size() != mu.size())
      throw std::invalid_argument("demo spec field lengths disagree");
    for (double s : sigma) {
      if (!(s > 0.0)) throw std::invalid_argument("demo sigma must be strictly positive");
    }
    std::vector<int> nz;
    for (size_t i = 0; i < delta.size(); ++i) {
      if (delta[i] != 0.0) nz.push_back(static_cast<int>(i));
    }
    if (nz != support)
      throw std::invalid_argument("support must list exactly the nonzero-delta dims");
  }
};

// Uniform sparse demo: d dims, constant sigma, first support_dims dims carry
// strength delta, mu = 0.
inline GaussianDemoSpec make_sparse_demo(size_t d, double sigma, size_t support_dims,
                                         double delta) {
  GaussianDemoSpec spec;
  spec.mu.assign(d, 0.0);
  spec.sigma.assign(d, sigma);
  spec.delta.assign(d, 0.0);
  for (size_t i = 0; i < support_dims && i < d; ++i) {
    spec.delta[i] = delta;
    spec.support.push_back(static_cast<int>(i));
  }
  spec.validate();
  return spec;
}

// Chebyshev upper bound on the set-level detection error:
// 4 sum sigma_i^2 (sigma_i^2 + delta_i^2) / (sum delta_i^2)^2 over i in A.
// May exceed 1; returned as-is.
inline double set_error_bound(const GaussianDemoSpec& spec, const std::vector<int>& A) {
  spec.validate();
  double num = 0.0;
  double den = 0.0;
  for (int i : A) {
    if (i < 0 || static_cast<size_t>(i) >= spec.dim())
      throw std::invalid_argument("index set out of range");
    double s2 = spec.sigma[i] * spec.sigma[i];
    double d2 = spec.delta[i] * spec.delta[i];
    num += s2 * (s2 + d2);
    den += d2;
  }
  if (!(den > 0.0))
    throw std::invalid_argument("set_error_bound needs a nonzero delta on A");
  return 4.0 * num / (den * den);
}

struct McEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

// Monte Carlo oracle for the set-level detection error probability
// P(sum_{i in A} |x_bd_i - mu_i|^2 < sum_{i in A} |x_clean_i - mu_i|^2).
// Ties count as non-error. Independent of the closed forms above.
inline McEstimate mc_error_prob(const GaussianDemoSpec& spec, const std::vector<int>& A,
                                size_t samples, Rng& rng) {
  spec.validate();
  if (samples < 1000) throw std::invalid_argument("mc_error_prob needs >= 1000 samples");
  for (int i : A) {
    if (i < 0 || static_cast<size_t>(i) >= spec.dim())
      throw std::invalid_argument("index set out of range");
  }
  size_t errors = 0;
  for (size_t s = 0; s < samples; ++s) {
    double bd = 0.0;
    double clean = 0.0;
    for (int i : A) {
      double devc = spec.sigma[i] * rng.gaussian();
      double devb = spec.sigma[i] * rng.gaussian() + spec.delta[i];
      clean += devc * devc;
      bd += devb * devb;
    }
    if (bd < clean) ++errors;
  }
  McEstimate out;
  out.estimate = static_cast<double>(errors) / static_cast<double>(samples);
  out.stderr_ = std::sqrt(out.estimate * (1.0 - out.estimate) /
                          static_cast<double>(samples));
  return out;
}

// Unbiased backdoor-strength estimator (n/(n-1)) * (x_bd - mean of all updates).
inline UpdateVector delta_hat(const ClientRoundSet& set, int backdoor_index) {
  set.validate();
  const size_t n = set.n();
  if (backdoor_index < 0 || static_cast<size_t>(backdoor_index) >= n)
    throw std::invalid_argument("backdoor index out of range");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return set.client_ids[a] < set.client_ids[b];
  });

  const double scale = static_cast<double>(n) / static_cast<double>(n - 1);
  UpdateVector out(set.dim());
  for (size_t j = 0; j < out.size(); ++j) {
    double mean = 0.0;
    for (size_t k : order) mean += set.updates[k][j];
    mean /= static_cast<double>(n);
    out[j] = scale * (set.updates[static_cast<size_t>(backdoor_index)][j] - mean);
  }
  return out;
}

// Draws one demo round: n-1 clean clients i.i.d. from N(mu, diag sigma^2) and
// the backdoor client as an independent clean draw plus delta.
inline ClientRoundSet sample_demo_round(const GaussianDemoSpec& spec, size_t n,
                                        int backdoor_index, Rng& rng) {
  spec.validate();
  if (n < 2) throw std::invalid_argument("demo round needs at least two clients");
  if (backdoor_index < 0 || static_cast<size_t>(backdoor_index) >= n)
    throw std::invalid_argument("backdoor index out of range");
  ClientRoundSet set;
  set.round = 0;
  set.updates.resize(n);
  set.client_ids.resize(n);
  for (size_t c = 0; c < n; ++c) {
    set.client_ids[c] = static_cast<int>(c);
    UpdateVector& u = set.updates[c];
    u.resize(spec.dim());
    for (size_t j = 0; j < u.size(); ++j) u[j] = spec.mu[j] + spec.sigma[j] * rng.gaussian();
    if (c == static_cast<size_t>(backdoor_index)) {
      for (size_t j = 0; j < u.size(); ++j) u[j] += spec.delta[j];
    }
  }
  return set;
}

struct IndicatorReport {
  std::vector<double> fractions;      // sorted ascending
  std::vector<double> dis_sum_ratio;  // Dis-Sum(backdoor) / median Dis-Sum
  std::vector<double> rel_strength;   // RMS(delta_hat) / pooled clean std
};

namespace detail {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Fraction-of-dimensions indicators: for each fraction, restrict to the
// K' = max(1, floor(f * d)) dimensions with the largest |delta_hat|, then
// compute the backdoor's distance-sum ratio (l2 metric, Krum neighbor rule)
// and the relative backdoor strength on those dimensions.
inline IndicatorReport indicators(const ClientRoundSet& set, int backdoor_index,
                                  std::vector<double> fractions) {
  set.validate();
  const size_t n = set.n();
  if (n < 3) throw std::invalid_argument("indicators need at least three clients");
  if (backdoor_index < 0 || static_cast<size_t>(backdoor_index) >= n)
    throw std::invalid_argument("backdoor index out of range");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0))
      throw std::invalid_argument("fractions must lie in (0, 1]");
  }
  std::sort(fractions.begin(), fractions.end());

  const size_t d = set.dim();
  const UpdateVector dh = delta_hat(set, backdoor_index);

  // Rank dimensions by |delta_hat|, ties toward the lower index.
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double da = std::abs(dh[a]);
    double db = std::abs(dh[b]);
    if (da != db) return da > db;
    return a < b;
  });

  // Per-dimension unbiased variance over the clean clients.
  std::vector<double> clean_var(d, 0.0);
  const size_t n_clean = n - 1;
  for (size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (size_t c = 0; c < n; ++c) {
      if (c == static_cast<size_t>(backdoor_index)) continue;
      mean += set.updates[c][j];
    }
    mean /= static_cast<double>(n_clean);
    double var = 0.0;
    for (size_t c = 0; c < n; ++c) {
      if (c == static_cast<size_t>(backdoor_index)) continue;
      double dev = set.updates[c][j] - mean;
      var += dev * dev;
    }
    clean_var[j] = var / static_cast<double>(n_clean - 1);
  }

  IndicatorReport rep;
  rep.fractions = fractions;
  for (double f : fractions) {
    size_t K = static_cast<size_t>(topk_count(f, d));
    std::vector<int> dims(order.begin(), order.begin() + K);
    std::sort(dims.begin(), dims.end());

    // Restricted l2 distances and Krum distance-sums.
    DistanceMatrix D;
    D.n = n;
    D.metric = DistanceMetric::l2;
    D.entries.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = i + 1; j < n; ++j) {
        double s = 0.0;
        for (int l : dims) {
          double diff = set.updates[i][l] - set.updates[j][l];
          s += diff * diff;
        }
        double dist = std::sqrt(s);
        D.at(i, j) = dist;
        D.at(j, i) = dist;
      }
    }
    DisSumVector ds = dis_sums(D, neighbor_sets(D));
    double med = detail::median_of(ds);
    double bd = ds[static_cast<size_t>(backdoor_index)];
    double ratio;
    if (med == 0.0) {
      ratio = (bd == 0.0) ? 1.0 : std::numeric_limits<double>::infinity();
    } else {
      ratio = bd / med;
    }
    rep.dis_sum_ratio.push_back(ratio);

    double ms = 0.0;
    double mv = 0.0;
    for (int l : dims) {
      ms += dh[l] * dh[l];
      mv += clean_var[l];
    }
    double rms = std::sqrt(ms / static_cast<double>(K));
    double pooled = std::sqrt(mv / static_cast<double>(K));
    double rel;
    if (pooled == 0.0) {
      rel = (rms == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      rel = rms / pooled;
    }
    rep.rel_strength.push_back(rel);
  }
  return rep;
}

}  // namespace fedagg

// Test-only reference implementations, written straight from the definitions
// and kept independent of the library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "fedagg/core.hpp"

namespace fedagg::oracles {

// Classical Krum from the distance-sum definition. Distance sums accumulate
// in ascending neighbor-index order, the same convention the library uses,
// so mathematical ties stay ties.
struct BruteKrum {
  std::vector<std::vector<int>> neighbors;
  std::vector<double> sums;
  int i_star = 0;
};

inline BruteKrum brute_krum(const std::vector<UpdateVector>& xs) {
  const size_t n = xs.size();
  const size_t m = (n + 2) / 2;
  std::vector<std::vector<double>> D(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (size_t l = 0; l < xs[i].size(); ++l) {
        double diff = xs[i][l] - xs[j][l];
        s += diff * diff;
      }
      D[i][j] = std::sqrt(s);
    }
  }
  BruteKrum out;
  out.neighbors.resize(n);
  out.sums.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> ranked;
    for (size_t j = 0; j < n; ++j) {
      if (j != i) ranked.push_back({D[i][j], static_cast<int>(j)});
    }
    std::sort(ranked.begin(), ranked.end());
    out.neighbors[i].push_back(static_cast<int>(i));
    for (size_t k = 0; k + 1 < m; ++k) out.neighbors[i].push_back(ranked[k].second);
    std::sort(out.neighbors[i].begin(), out.neighbors[i].end());
    for (int j : out.neighbors[i]) out.sums[i] += D[i][static_cast<size_t>(j)];
  }
  out.i_star = 0;
  for (size_t i = 1; i < n; ++i) {
    if (out.sums[i] < out.sums[out.i_star]) out.i_star = static_cast<int>(i);
  }
  return out;
}

// Coarse-to-fine grid search for the 2-D geometric median. The objective is
// convex, so refinement around the best node converges to the global
// minimizer; the refinement box keeps a generous margin because the valley
// floor can be extremely flat and ties can stretch along it.
inline std::pair<double, double> grid_search_median_2d(
    const std::vector<UpdateVector>& pts, int levels = 4, int cells = 200) {
  double lo_x = pts[0][0], hi_x = pts[0][0], lo_y = pts[0][1], hi_y = pts[0][1];
  for (const auto& p : pts) {
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
  }
  double margin = 1e-6 + 0.01 * std::max(hi_x - lo_x, hi_y - lo_y);
  lo_x -= margin;
  hi_x += margin;
  lo_y -= margin;
  hi_y += margin;
  double best_x = lo_x, best_y = lo_y;
  for (int level = 0; level < levels; ++level) {
    double step_x = (hi_x - lo_x) / cells;
    double step_y = (hi_y - lo_y) / cells;
    double best = std::numeric_limits<double>::infinity();
    for (int ix = 0; ix <= cells; ++ix) {
      for (int iy = 0; iy <= cells; ++iy) {
        double x = lo_x + ix * step_x;
        double y = lo_y + iy * step_y;
        double obj = 0.0;
        for (const auto& p : pts) obj += std::hypot(x - p[0], y - p[1]);
        if (obj < best) {
          best = obj;
          best_x = x;
          best_y = y;
        }
      }
    }
    lo_x = best_x - 10 * step_x;
    hi_x = best_x + 10 * step_x;
    lo_y = best_y - 10 * step_y;
    hi_y = best_y + 10 * step_y;
  }
  return {best_x, best_y};
}

}  // namespace fedagg::oracles

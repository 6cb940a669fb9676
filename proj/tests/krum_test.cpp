#include "fedagg/krum.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fedagg/rng.hpp"
#include "test_oracles.hpp"

namespace fedagg {
namespace {

ClientRoundSet make_set(std::vector<UpdateVector> updates) {
  ClientRoundSet set;
  set.updates = std::move(updates);
  for (size_t i = 0; i < set.updates.size(); ++i)
    set.client_ids.push_back(static_cast<int>(i));
  return set;
}

TEST(PairwiseL2, KnownDistances) {
  auto zero = pairwise_l2(make_set({{1.0, 2.0}, {1.0, 2.0}}));
  EXPECT_DOUBLE_EQ(zero.at(0, 1), 0.0);

  auto one_d = pairwise_l2(make_set({{0.0}, {3.0}}));
  EXPECT_DOUBLE_EQ(one_d.at(0, 1), 3.0);

  auto triangle = pairwise_l2(make_set({{0.0, 0.0}, {3.0, 4.0}}));
  EXPECT_DOUBLE_EQ(triangle.at(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(triangle.at(1, 0), 5.0);
  EXPECT_DOUBLE_EQ(triangle.at(0, 0), 0.0);
}

TEST(TopkDims, LargestAbsoluteDiffs) {
  UpdateVector xi{0.0, 0.0, 0.0, 0.0};
  UpdateVector xj{5.0, 0.0, 1.0, 2.0};
  EXPECT_EQ(topk_dims(xi, xj, 2), (std::vector<int>{0, 3}));
  EXPECT_EQ(topk_dims(xi, xj, 4), (std::vector<int>{0, 1, 2, 3}));

  UpdateVector a{1.0, 1.0, 1.0};
  UpdateVector b{2.0, 2.0, 2.0};
  EXPECT_EQ(topk_dims(a, b, 2), (std::vector<int>{0, 1}));

  EXPECT_THROW(topk_dims(xi, xj, 5), std::invalid_argument);
  EXPECT_THROW(topk_dims(xi, xj, 0), std::invalid_argument);
}

TEST(DimKrumDistance, TopKMeanAbsoluteDiff) {
  UpdateVector xi{0.0, 0.0, 0.0, 0.0};
  UpdateVector xj{5.0, 0.0, 1.0, 2.0};
  EXPECT_DOUBLE_EQ(dimkrum_distance(xi, xj, 2), 3.5);
  EXPECT_DOUBLE_EQ(dimkrum_distance(xi, xi, 2), 0.0);
  // K = 1 collapses to the max absolute coordinate difference.
  EXPECT_DOUBLE_EQ(dimkrum_distance(xi, xj, 1), 5.0);
}

TEST(DimKrumDistance, SymmetricExactly) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    size_t d = static_cast<size_t>(rng.uniform_int(1, 12));
    int K = static_cast<int>(rng.uniform_int(1, static_cast<int64_t>(d)));
    UpdateVector x(d), y(d);
    for (size_t j = 0; j < d; ++j) {
      x[j] = rng.gaussian();
      y[j] = rng.gaussian();
    }
    EXPECT_EQ(dimkrum_distance(x, y, K), dimkrum_distance(y, x, K));
  }
}

TEST(DimKrumDistance, FullKMatchesL1) {
  // Exact equality needs an exact division; power-of-two K keeps it exact.
  Rng rng(12);
  for (size_t d : {1u, 2u, 4u, 8u}) {
    UpdateVector x(d), y(d);
    for (size_t j = 0; j < d; ++j) {
      x[j] = rng.gaussian();
      y[j] = rng.gaussian();
    }
    double l1 = 0.0;
    for (size_t j = 0; j < d; ++j) l1 += std::abs(x[j] - y[j]);
    EXPECT_EQ(dimkrum_distance(x, y, static_cast<int>(d)) * static_cast<double>(d), l1);
  }
  // Arbitrary d agrees to rounding.
  UpdateVector x(7), y(7);
  for (size_t j = 0; j < 7; ++j) {
    x[j] = rng.gaussian();
    y[j] = rng.gaussian();
  }
  double l1 = 0.0;
  for (size_t j = 0; j < 7; ++j) l1 += std::abs(x[j] - y[j]);
  EXPECT_NEAR(dimkrum_distance(x, y, 7) * 7.0, l1, 1e-12 * std::max(1.0, l1));
}

TEST(NeighborSets, ThreeClientExample) {
  auto set = make_set({{0.0}, {1.0}, {10.0}});
  auto D = pairwise_l2(set);
  auto nb = neighbor_sets(D);
  ASSERT_EQ(nb.size(), 3u);
  EXPECT_EQ(nb[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(nb[1], (std::vector<int>{0, 1}));
  EXPECT_EQ(nb[2], (std::vector<int>{1, 2}));
}

TEST(NeighborSets, CountAndSelfMembership) {
  EXPECT_EQ(neighbor_count(3), 2u);
  EXPECT_EQ(neighbor_count(10), 6u);

  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    size_t n = static_cast<size_t>(rng.uniform_int(2, 9));
    ClientRoundSet set;
    for (size_t i = 0; i < n; ++i) {
      set.updates.push_back({rng.gaussian(), rng.gaussian()});
      set.client_ids.push_back(static_cast<int>(i));
    }
    auto nb = neighbor_sets(pairwise_l2(set));
    for (size_t i = 0; i < n; ++i) {
      EXPECT_EQ(nb[i].size(), neighbor_count(n));
      EXPECT_TRUE(std::find(nb[i].begin(), nb[i].end(), static_cast<int>(i)) !=
                  nb[i].end());
    }
  }
}

TEST(NeighborSets, AllEqualDistancesTieBreakByIndex) {
  DistanceMatrix D;
  D.n = 5;
  D.entries.assign(25, 1.0);
  for (size_t i = 0; i < 5; ++i) D.at(i, i) = 0.0;
  auto nb = neighbor_sets(D);
  // m = 3: self plus the two lowest other indices.
  EXPECT_EQ(nb[0], (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(nb[4], (std::vector<int>{0, 1, 4}));
}

TEST(DisSums, ContinuesNeighborExample) {
  auto set = make_set({{0.0}, {1.0}, {10.0}});
  auto D = pairwise_l2(set);
  auto ds = dis_sums(D, neighbor_sets(D));
  EXPECT_DOUBLE_EQ(ds[0], 1.0);
  EXPECT_DOUBLE_EQ(ds[1], 1.0);
  EXPECT_DOUBLE_EQ(ds[2], 9.0);
}

TEST(DisSums, ZeroMatrixAndHomogeneity) {
  DistanceMatrix D;
  D.n = 4;
  D.entries.assign(16, 0.0);
  auto ds = dis_sums(D, neighbor_sets(D));
  for (double v : ds) EXPECT_DOUBLE_EQ(v, 0.0);

  Rng rng(17);
  ClientRoundSet set;
  for (size_t i = 0; i < 5; ++i) {
    set.updates.push_back({rng.gaussian(), rng.gaussian(), rng.gaussian()});
    set.client_ids.push_back(static_cast<int>(i));
  }
  auto base = pairwise_l2(set);
  auto ds1 = dis_sums(base, neighbor_sets(base));
  const double c = 2.0;  // power of two: scaling is exact
  ClientRoundSet scaled = set;
  for (auto& u : scaled.updates)
    for (auto& x : u) x *= c;
  auto D2 = pairwise_l2(scaled);
  auto ds2 = dis_sums(D2, neighbor_sets(D2));
  for (size_t i = 0; i < ds1.size(); ++i) EXPECT_DOUBLE_EQ(ds2[i], c * ds1[i]);
}

TEST(ApplyMemory, PaperArithmetic) {
  MemoryState mem(1);
  mem.dis_mem[0] = 1.0;
  auto out = apply_memory({2.0}, mem, 0.9);
  EXPECT_DOUBLE_EQ(out[0], 2.9);
  EXPECT_DOUBLE_EQ(mem.dis_mem[0], 2.9);
}

TEST(ApplyMemory, AlphaZeroDisablesMemory) {
  MemoryState mem(2);
  mem.dis_mem = {5.0, 7.0};
  auto out = apply_memory({1.0, 2.0}, mem, 0.0);
  EXPECT_EQ(out, (DisSumVector{1.0, 2.0}));
}

TEST(ApplyMemory, GeometricClosedFormOverRounds) {
  const double alpha = 0.9;
  const double r = 2.0;
  MemoryState mem(1);
  for (int k = 0; k < 50; ++k) {
    auto out = apply_memory({r}, mem, alpha);
    double closed = r * (1.0 - std::pow(alpha, k + 1)) / (1.0 - alpha);
    EXPECT_NEAR(out[0], closed, 1e-12);
  }
}

TEST(ApplyMemory, NonDecreasingInAlpha) {
  MemoryState m1(1), m2(1);
  m1.dis_mem[0] = 3.0;
  m2.dis_mem[0] = 3.0;
  auto lo = apply_memory({2.0}, m1, 0.1);
  auto hi = apply_memory({2.0}, m2, 0.8);
  EXPECT_LE(lo[0], hi[0]);
}

TEST(Select, KrumOneDimensionalExample) {
  auto set = make_set({{0.0}, {1.0}, {10.0}});
  DimKrumConfig cfg;
  cfg.variant = KrumVariant::krum;
  cfg.rho = 1.0;
  cfg.alpha = 0.0;
  MemoryState mem(3);
  auto rep = select(set, cfg, mem);
  EXPECT_EQ(rep.i_star, 0);  // tied with client 1, lower index wins
  EXPECT_EQ(rep.selected, (std::vector<int>{0}));
  EXPECT_EQ(rep.weights_p, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(Select, MultiKrumSameData) {
  auto set = make_set({{0.0}, {1.0}, {10.0}});
  DimKrumConfig cfg;
  cfg.variant = KrumVariant::multikrum;
  MemoryState mem(3);
  auto rep = select(set, cfg, mem);
  EXPECT_EQ(rep.selected, (std::vector<int>{0, 1}));
  EXPECT_DOUBLE_EQ(rep.weights_p[0], 0.5);
  EXPECT_DOUBLE_EQ(rep.weights_p[1], 0.5);
  EXPECT_DOUBLE_EQ(rep.weights_p[2], 0.0);
}

TEST(Select, TopkCountArithmetic) {
  EXPECT_EQ(topk_count(1e-3, 10000), 10);
  EXPECT_EQ(topk_count(1e-5, 100), 1);  // floor would be 0, clamped to 1
  EXPECT_EQ(topk_count(1.0, 7), 7);
}

TEST(Select, MatchesBruteForceKrumOracle) {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = static_cast<size_t>(rng.uniform_int(3, 6));
    size_t d = static_cast<size_t>(rng.uniform_int(1, 4));
    ClientRoundSet set;
    for (size_t i = 0; i < n; ++i) {
      UpdateVector u(d);
      for (auto& x : u) x = rng.gaussian();
      set.updates.push_back(u);
      set.client_ids.push_back(static_cast<int>(i));
    }
    oracles::BruteKrum oracle = oracles::brute_krum(set.updates);
    DimKrumConfig cfg;
    cfg.variant = KrumVariant::krum;
    cfg.rho = 1.0;
    cfg.alpha = 0.0;
    MemoryState mem(n);
    auto rep = select(set, cfg, mem);
    EXPECT_EQ(rep.i_star, oracle.i_star);
    for (size_t i = 0; i < n; ++i) {
      EXPECT_EQ(rep.neighbor_sets[i], oracle.neighbors[i]);
      EXPECT_NEAR(rep.dis_sums[i], oracle.sums[i], 1e-12);
    }
  }
}

TEST(Select, BulyanIterativeSelection) {
  // Hand-traced iterated Krum on a dyadic cluster {0, 0.125, 0.25, 0.375}
  // plus an outlier at 10: picks 1, then 2, then 0 (ties broken by index).
  auto set = make_set({{0.0}, {0.125}, {0.25}, {0.375}, {10.0}});
  DimKrumConfig cfg;
  cfg.variant = KrumVariant::bulyan;
  MemoryState mem(5);
  auto rep = select(set, cfg, mem);
  EXPECT_EQ(rep.selected, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(rep.i_star, 1);

  ClientRoundSet tiny = make_set({{0.0}, {1.0}});
  MemoryState mem2(2);
  EXPECT_THROW(select(tiny, cfg, mem2), std::invalid_argument);
}

TEST(Select, DimKrumUsesTopKDistancesAndMemory) {
  // Client 2 deviates massively on one dimension only.
  auto set = make_set({{0.0, 0.0, 0.0, 0.0},
                       {0.01, 0.0, 0.01, 0.0},
                       {0.0, 9.0, 0.0, 0.0}});
  DimKrumConfig cfg;
  cfg.variant = KrumVariant::dimkrum;
  cfg.rho = 0.25;  // K = 1
  cfg.alpha = 0.5;
  cfg.lambda = 0.0;
  MemoryState mem(3);
  auto rep1 = select(set, cfg, mem);
  EXPECT_EQ(rep1.distances.metric, DistanceMetric::dimkrum_topk);
  EXPECT_DOUBLE_EQ(rep1.distances.at(0, 2), 9.0);
  EXPECT_DOUBLE_EQ(rep1.distances.at(0, 1), 0.01);
  EXPECT_EQ(rep1.i_star, 0);
  EXPECT_EQ(rep1.selected, (std::vector<int>{0, 1}));
  // Memory stores the post-memory value and feeds the next round.
  auto mem_after_round1 = mem.dis_mem;
  auto rep2 = select(set, cfg, mem);
  for (size_t i = 0; i < 3; ++i)
    EXPECT_DOUBLE_EQ(rep2.dis_sums[i], rep1.dis_sums[i] + 0.5 * mem_after_round1[i]);
}

TEST(Select, TranslationInvariance) {
  // Integer-valued updates and shift keep the arithmetic exact.
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    size_t n = static_cast<size_t>(rng.uniform_int(3, 7));
    size_t d = static_cast<size_t>(rng.uniform_int(2, 6));
    ClientRoundSet set;
    for (size_t i = 0; i < n; ++i) {
      UpdateVector u(d);
      for (auto& x : u) x = static_cast<double>(rng.uniform_int(-50, 50));
      set.updates.push_back(u);
      set.client_ids.push_back(static_cast<int>(i));
    }
    UpdateVector shift(d);
    for (auto& x : shift) x = static_cast<double>(rng.uniform_int(-20, 20));
    ClientRoundSet moved = set;
    for (auto& u : moved.updates)
      for (size_t j = 0; j < d; ++j) u[j] += shift[j];

    for (KrumVariant variant : {KrumVariant::krum, KrumVariant::multikrum,
                                KrumVariant::dimkrum}) {
      DimKrumConfig cfg;
      cfg.variant = variant;
      cfg.rho = 0.5;
      cfg.alpha = 0.0;
      MemoryState m1(n), m2(n);
      auto a = select(set, cfg, m1);
      auto b = select(moved, cfg, m2);
      EXPECT_EQ(a.distances.entries, b.distances.entries);
      EXPECT_EQ(a.dis_sums, b.dis_sums);
      EXPECT_EQ(a.i_star, b.i_star);
      EXPECT_EQ(a.selected, b.selected);
    }
  }
}

TEST(Select, SelectedSetSizeInvariants) {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = static_cast<size_t>(rng.uniform_int(3, 9));
    ClientRoundSet set;
    for (size_t i = 0; i < n; ++i) {
      set.updates.push_back({rng.gaussian(), rng.gaussian(), rng.gaussian()});
      set.client_ids.push_back(static_cast<int>(i));
    }
    const size_t m = neighbor_count(n);
    for (KrumVariant variant : {KrumVariant::krum, KrumVariant::multikrum,
                                KrumVariant::bulyan, KrumVariant::dimkrum}) {
      DimKrumConfig cfg;
      cfg.variant = variant;
      MemoryState mem(n);
      auto rep = select(set, cfg, mem);
      size_t expect = (variant == KrumVariant::krum) ? 1 : m;
      EXPECT_EQ(rep.selected.size(), expect);
      for (int i : rep.selected) {
        EXPECT_GE(i, 0);
        EXPECT_LT(i, static_cast<int>(n));
      }
      for (double v : rep.dis_sums) EXPECT_GE(v, 0.0);
      double psum = 0.0;
      for (double p : rep.weights_p) psum += p;
      EXPECT_NEAR(psum, 1.0, 1e-9);
    }
  }
}

TEST(AdaptiveNoise, LastRoundAndZeroSigmaAreIdentity) {
  auto set = make_set({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
  UpdateVector agg{1.0, 2.0};
  Rng rng(5);
  EXPECT_EQ(adaptive_noise(agg, set, {0, 1, 2}, 5.0, rng, true), agg);
  // Identical selected updates: sigma is zero everywhere, aggregate unchanged.
  EXPECT_EQ(adaptive_noise(agg, set, {0, 1, 2}, 5.0, rng, false), agg);
}

TEST(AdaptiveNoise, LambdaZeroIsIdentityAndSmallSRejected) {
  auto set = make_set({{1.0}, {2.0}, {3.0}});
  UpdateVector agg{2.0};
  Rng rng(6);
  EXPECT_EQ(adaptive_noise(agg, set, {0}, 0.0, rng, false), agg);
  EXPECT_THROW(adaptive_noise(agg, set, {0}, 1.0, rng, false), std::invalid_argument);
}

TEST(AdaptiveNoise, EmpiricalStdMatchesLambdaSigma) {
  // sigma over S on the only dimension: values {0, 0.1, 0.2} -> sd = 0.1.
  auto set = make_set({{0.0}, {0.1}, {0.2}});
  const double sigma = 0.1;
  const double lambda = 5.0;
  UpdateVector agg{0.0};
  Rng rng(31);
  const int kSamples = 10000;
  double sum = 0.0, sq = 0.0;
  for (int s = 0; s < kSamples; ++s) {
    double v = adaptive_noise(agg, set, {0, 1, 2}, lambda, rng, false)[0];
    sum += v;
    sq += v * v;
  }
  double mean = sum / kSamples;
  double sd = std::sqrt((sq - kSamples * mean * mean) / (kSamples - 1));
  EXPECT_NEAR(sd, lambda * sigma, 0.05 * lambda * sigma);
}

}  // namespace
}  // namespace fedagg

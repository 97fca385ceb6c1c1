#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "deffuant/init.hpp"
#include "deffuant/sad.hpp"

using namespace deffuant;

namespace {

// Dense reference: the same sharing rule on a full weight vector.
void dense_step(std::vector<double>& w, VertexId u, VertexId v, double mu) {
  const double wu = w[u];
  const double wv = w[v];
  w[u] = (1.0 - mu) * wu + mu * wv;
  w[v] = (1.0 - mu) * wv + mu * wu;
}

}  // namespace

TEST(SadStep, Examples) {
  const auto ring = build_lattice(LatticeSpec::ring(10));
  auto p = sad_step(SadProfile::indicator(0), ring, 0, 1, 0.5);
  EXPECT_EQ(p.weight(0), 0.5);
  EXPECT_EQ(p.weight(1), 0.5);

  const auto q = sad_step(SadProfile::indicator(0), ring, 2, 3, 0.3);
  EXPECT_EQ(q, SadProfile::indicator(0));

  const auto r = sad_step(p, ring, 1, 2, 0.5);
  EXPECT_EQ(r.weight(0), 0.5);
  EXPECT_EQ(r.weight(1), 0.25);
  EXPECT_EQ(r.weight(2), 0.25);
  std::vector<double> dense(10, 0.0);
  dense[0] = 1;
  dense_step(dense, 0, 1, 0.5);
  dense_step(dense, 1, 2, 0.5);
  for (VertexId x = 0; x < 10; ++x) EXPECT_EQ(r.weight(x), dense[x]);
}

TEST(SadStep, WrapsAroundTheRing) {
  const auto ring = build_lattice(LatticeSpec::ring(6));
  const auto p = sad_step(SadProfile::indicator(0), ring, 5, 0, 0.5);
  EXPECT_EQ(p.weight(5), 0.5);
  EXPECT_TRUE(support_is_arc(p, 6));
}

TEST(SadStep, RejectsNonAdjacentPairs) {
  const auto ring = build_lattice(LatticeSpec::ring(10));
  EXPECT_THROW(sad_step(SadProfile::indicator(0), ring, 0, 2, 0.5), std::invalid_argument);
  EXPECT_THROW(sad_step(SadProfile::indicator(0), ring, 3, 3, 0.5), std::invalid_argument);
  EXPECT_THROW(sad_step(SadProfile::indicator(0), build_lattice(LatticeSpec::cube(2, 4)), 0, 1, 0.5),
               std::invalid_argument);
}

TEST(SadStep, MatchesDenseOracle) {
  const std::size_t n = 40;
  CounterRng rng(3, 0, Purpose::test);
  for (int trial = 0; trial < 2000; ++trial) {
    // random arc support of length <= 20 with random positive weights
    const auto start = static_cast<VertexId>(rng.index(n));
    const std::size_t len = 1 + rng.index(20);
    SadProfile p;
    std::vector<double> dense(n, 0.0);
    double total = 0;
    for (std::size_t k = 0; k < len; ++k) total += (dense[(start + k) % n] = rng.uniform());
    for (std::size_t k = 0; k < len; ++k) {
      const auto x = static_cast<VertexId>((start + k) % n);
      dense[x] /= total;
      p.weights[x] = dense[x];
    }
    const double mu = rng.uniform(0.01, 0.5);
    const std::size_t steps = rng.index(101);
    for (std::size_t s = 0; s < steps; ++s) {
      const auto u = static_cast<VertexId>(rng.index(n));
      const auto v = static_cast<VertexId>((u + 1) % n);
      sad_step(p, n, u, v, mu);
      dense_step(dense, u, v, mu);
      ASSERT_TRUE(support_is_arc(p, n));
    }
    for (VertexId x = 0; x < n; ++x) ASSERT_EQ(p.weight(x), dense[x]);
    ASSERT_NEAR(p.total(), 1.0, 1e-12 * static_cast<double>(steps + 1));
    for (auto& [x, w] : p.weights) ASSERT_GE(w, 0.0);
  }
}

TEST(BackwardProfile, EmptyLogGivesIndicator) {
  const auto ring = build_lattice(LatticeSpec::ring(20));
  EventLog log;
  log.horizon = 3.0;
  const auto p = backward_profile(ring, log, 0.5, 7, 2.0);
  EXPECT_EQ(p, SadProfile::indicator(7));
  const auto init = sample_iid(DistributionSpec::uniform(0, 1), ring, 1).values;
  EXPECT_EQ(p.apply(init), init[7]);
}

TEST(BackwardProfile, SingleEventGivesMidpoint) {
  const auto ring = build_lattice(LatticeSpec::ring(20));
  const auto e = find_edge(ring, 7, 8);
  ASSERT_TRUE(e.has_value());
  EventLog log;
  log.events.push_back({0.5, *e, true, 0.2, 0.6});
  log.horizon = 1.0;
  const auto p = backward_profile(ring, log, 0.5, 7, 1.0);
  EXPECT_EQ(p.weight(7), 0.5);
  EXPECT_EQ(p.weight(8), 0.5);
  std::vector<double> init(20, 0.0);
  init[7] = 0.2;
  init[8] = 0.6;
  EXPECT_DOUBLE_EQ(p.apply(init), 0.4);
  // a rejected event contributes nothing
  log.events[0].accepted = false;
  EXPECT_EQ(backward_profile(ring, log, 0.5, 7, 1.0), SadProfile::indicator(7));
  // events after t are ignored
  log.events[0].accepted = true;
  EXPECT_EQ(backward_profile(ring, log, 0.5, 7, 0.4), SadProfile::indicator(7));
}

TEST(BackwardProfile, RejectsUncoveredTime) {
  const auto ring = build_lattice(LatticeSpec::ring(20));
  EventLog log;
  log.horizon = 1.0;
  EXPECT_THROW(backward_profile(ring, log, 0.5, 0, 1.5), std::invalid_argument);
  EXPECT_THROW(backward_profile(ring, log, 0.5, 20, 0.5), std::invalid_argument);
}

TEST(BackwardProfile, ReconstructsForwardRun) {
  const auto ring = build_lattice(LatticeSpec::ring(200));
  const auto init = sample_iid(DistributionSpec::uniform(0, 1), ring, 5).values;
  const ModelParams p{0.3, 0.6};
  Simulation sim(ring, init, p, 5);
  sim.run_events(10000);
  const auto& log = sim.log();
  CounterRng rng(5, 0, Purpose::queries);
  for (int q = 0; q < 50; ++q) {
    const auto v = static_cast<VertexId>(rng.index(200));
    const double t = rng.uniform(0, log.horizon);
    const auto profile = backward_profile(ring, log, p.mu, v, t);
    const auto state = state_at(ring, init, p.mu, log, t);
    EXPECT_LE(std::abs(profile.apply(init) - state[v]), 1e-10) << v << ' ' << t;
    EXPECT_NEAR(profile.total(), 1.0, 1e-12);
    EXPECT_TRUE(support_is_arc(profile, 200));
  }
  // the final state as well
  for (VertexId v = 0; v < 200; v += 17)
    EXPECT_LE(std::abs(backward_profile(ring, log, p.mu, v, log.horizon).apply(init) - sim.values()[v]), 1e-10);
}

TEST(Unimodal, RecognizesShapes) {
  SadProfile p;
  p.weights = {{0, 0.1}, {1, 0.3}, {2, 0.3}, {3, 0.2}, {4, 0.1}};
  EXPECT_TRUE(is_unimodal(p, 10));
  EXPECT_TRUE(peaks_at(p, 1));
  EXPECT_FALSE(peaks_at(p, 0));
  p.weights[3] = 0.05;
  EXPECT_FALSE(is_unimodal(p, 10));
  // an arc through the seam
  SadProfile q;
  q.weights = {{8, 0.2}, {9, 0.4}, {0, 0.3}, {1, 0.1}};
  EXPECT_TRUE(is_unimodal(q, 10));
  EXPECT_TRUE(is_unimodal(SadProfile::indicator(5), 10));
  // full ring: circular reading
  SadProfile r;
  r.weights = {{0, 0.3}, {1, 0.2}, {2, 0.1}, {3, 0.15}, {4, 0.25}};
  EXPECT_TRUE(is_unimodal(r, 5));
  r.weights[2] = 0.25;
  EXPECT_FALSE(is_unimodal(r, 5));
}

TEST(Unimodal, SingleSourceProfilesAreUnimodal) {
  const std::size_t n = 64;
  CounterRng rng(9, 0, Purpose::test);
  int failures = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    SadProfile p = SadProfile::indicator(0);
    const double mu = rng.uniform(0.05, 0.5);
    const std::size_t steps = 1 + rng.index(200);
    for (std::size_t s = 0; s < steps; ++s) {
      // edges near the source so that the profile actually spreads
      const auto off = static_cast<long long>(rng.index(21)) - 10;
      const auto u = static_cast<VertexId>((static_cast<long long>(n) + off) % static_cast<long long>(n));
      sad_step(p, n, u, static_cast<VertexId>((u + 1) % n), mu);
    }
    failures += !is_unimodal(p, n);
  }
  EXPECT_EQ(failures, 0);
}

// The peak need not stay at the source vertex.
TEST(Unimodal, PeakCanLeaveTheSource) {
  const std::size_t n = 16;
  auto at = [n](long long x) { return static_cast<VertexId>((x + static_cast<long long>(n)) % static_cast<long long>(n)); };
  SadProfile p = SadProfile::indicator(0);
  for (auto [u, v] : {std::pair{0, 1}, {1, 2}, {-1, 0}, {2, 3}, {-2, -1}, {-1, 0}}) sad_step(p, n, at(u), at(v), 0.5);
  EXPECT_EQ(p.weight(at(-2)), 0.125);
  EXPECT_EQ(p.weight(at(-1)), 0.1875);
  EXPECT_EQ(p.weight(0), 0.1875);
  EXPECT_EQ(p.weight(1), 0.25);
  EXPECT_EQ(p.weight(2), 0.125);
  EXPECT_EQ(p.weight(3), 0.125);
  EXPECT_TRUE(is_unimodal(p, n));
  EXPECT_FALSE(peaks_at(p, 0));
  EXPECT_TRUE(peaks_at(p, 1));
}

TEST(IsFlat, ConstantHalfIsFlatEverywhere) {
  const std::vector<double> c(100, 0.5);
  for (auto dir : {FlatDirection::right, FlatDirection::left, FlatDirection::two_sided}) {
    const auto r = is_flat(c, 10, 0.0, dir, 64);
    EXPECT_TRUE(r.flat);
    EXPECT_EQ(r.worst_average, 0.5);
    EXPECT_EQ(r.window, 64u);
    EXPECT_EQ(r.direction, dir);
  }
}

TEST(IsFlat, ExtremeSiteFailsAtLengthOne) {
  std::vector<double> c(100, 0.5);
  c[10] = 1.0;
  for (auto dir : {FlatDirection::right, FlatDirection::left, FlatDirection::two_sided}) {
    const auto r = is_flat(c, 10, 0.49, dir, 64);
    EXPECT_FALSE(r.flat);
    EXPECT_EQ(r.worst_average, 1.0);
  }
  EXPECT_TRUE(is_flat(c, 10, 0.5, FlatDirection::right, 64).flat);
}

TEST(IsFlat, DirectionsSeeDifferentSides) {
  std::vector<double> c(100, 0.5);
  c[12] = 0.9;  // to the right of 10 only
  EXPECT_FALSE(is_flat(c, 10, 0.1, FlatDirection::right, 5).flat);
  EXPECT_TRUE(is_flat(c, 10, 0.1, FlatDirection::left, 5).flat);
  EXPECT_FALSE(is_flat(c, 10, 0.1, FlatDirection::two_sided, 5).flat);
  // the window is too short to reach site 12
  EXPECT_TRUE(is_flat(c, 10, 0.1, FlatDirection::right, 2).flat);
  // left windows wrap around the ring
  c[12] = 0.5;
  c[98] = 0.95;
  EXPECT_FALSE(is_flat(c, 1, 0.1, FlatDirection::left, 5).flat);
  EXPECT_TRUE(is_flat(c, 1, 0.1, FlatDirection::right, 5).flat);
}

TEST(IsFlat, TwoSidedMatchesBruteForce) {
  CounterRng rng(4, 0, Purpose::test);
  const std::size_t n = 30;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> c(n);
    for (auto& x : c) x = 0.5 + rng.uniform(-0.2, 0.2);
    const auto v = static_cast<VertexId>(rng.index(n));
    const std::size_t w = 1 + rng.index(n);
    const double eps = rng.uniform(0, 0.2);
    bool flat = true;
    double worst = 0;
    for (std::size_t len = 1; len <= w; ++len) {
      for (std::size_t m = 0; m < len; ++m) {
        double s = 0;
        for (std::size_t k = 0; k < len; ++k) s += c[(v + n - m + k) % n];
        const double dev = std::abs(s / static_cast<double>(len) - 0.5);
        worst = std::max(worst, dev);
        flat = flat && dev <= eps + kFlatSlack;
      }
    }
    const auto r = is_flat(c, v, eps, FlatDirection::two_sided, w);
    EXPECT_EQ(r.flat, flat);
    EXPECT_NEAR(std::abs(r.worst_average - 0.5), worst, 1e-12);
  }
}

TEST(IsFlat, MonotoneInEpsilonAndWindow) {
  CounterRng rng(6, 0, Purpose::test);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> c(80);
    for (auto& x : c) x = rng.uniform(0.3, 0.7);
    const auto v = static_cast<VertexId>(rng.index(80));
    for (auto dir : {FlatDirection::right, FlatDirection::left, FlatDirection::two_sided}) {
      for (double eps : {0.02, 0.05, 0.1, 0.2}) {
        const bool base = is_flat(c, v, eps, dir, 40).flat;
        if (!base) continue;
        EXPECT_TRUE(is_flat(c, v, eps * 1.5, dir, 40).flat);
        for (std::size_t w : {1u, 5u, 20u, 39u}) EXPECT_TRUE(is_flat(c, v, eps, dir, w).flat);
      }
    }
  }
}

TEST(IsFlat, RejectsOversizedWindow) {
  const std::vector<double> c(10, 0.5);
  EXPECT_THROW(is_flat(c, 0, 0.1, FlatDirection::right, 11), std::invalid_argument);
  EXPECT_THROW(is_flat(c, 0, 0.1, FlatDirection::right, 0), std::invalid_argument);
  EXPECT_NO_THROW(is_flat(c, 0, 0.1, FlatDirection::two_sided, 10));
}

TEST(IsFlat, UniformFieldsAreSometimesRightFlat) {
  const std::vector<std::size_t> windows{1, 5, 20, 50};
  std::vector<int> flat(windows.size(), 0);
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto c = sample_iid(DistributionSpec::uniform(0, 1), 64, 100, s).values;
    for (std::size_t k = 0; k < windows.size(); ++k) flat[k] += is_flat(c, 0, 0.1, FlatDirection::right, windows[k]).flat;
  }
  EXPECT_NEAR(flat[0] / 10000.0, 0.2, 0.02);
  EXPECT_GT(flat.back(), 0);
  for (std::size_t k = 1; k < windows.size(); ++k) EXPECT_LT(flat[k], flat[k - 1]) << windows[k];
}

TEST(DriftMonitor, ConstantHalfHasZeroDeviation) {
  const auto ring = build_lattice(LatticeSpec::ring(100));
  Simulation sim(ring, std::vector<double>(100, 0.5), {0.5, 0.8}, 1, 0, {}, false);
  const auto r = flat_drift_monitor(sim, 30, 0.0, 10000);
  EXPECT_EQ(r.max_deviation, 0.0);
  EXPECT_TRUE(r.within_envelope);
}

TEST(DriftMonitor, AlternatingFlatFieldStaysInEnvelope) {
  const std::size_t n = 1000;
  const auto ring = build_lattice(LatticeSpec::ring(n));
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = i % 2 ? 0.55 : 0.45;
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Simulation sim(ring, c, {0.5, 0.8}, seed, 0, {}, false);
    const auto r = flat_drift_monitor(sim, 500, 0.05, 100000);
    EXPECT_DOUBLE_EQ(r.envelope, 0.4);
    inside += r.within_envelope && r.max_deviation <= 0.40;
  }
  EXPECT_EQ(inside, 100);
}

TEST(DriftMonitor, RejectsNonFlatVertex) {
  const auto ring = build_lattice(LatticeSpec::ring(100));
  std::vector<double> c(100, 0.5);
  c[30] = 1.0;
  Simulation sim(ring, c, {0.5, 0.8}, 1);
  EXPECT_THROW(flat_drift_monitor(sim, 30, 0.1, 100), std::invalid_argument);
}

TEST(ProfileCsv, WritesSortedRows) {
  SadProfile p;
  p.weights = {{3, 0.25}, {1, 0.75}};
  std::ostringstream os;
  write_profile_csv(os, p);
  EXPECT_EQ(os.str(), "vertex,weight\n1,0.75\n3,0.25\n");
}

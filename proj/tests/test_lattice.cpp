#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "deffuant/lattice.hpp"
#include "deffuant/rng.hpp"

using namespace deffuant;

namespace {

std::size_t expected_edges(const LatticeSpec& s) {
  const std::size_t vol = s.volume();
  std::size_t total = 0;
  for (std::size_t side : s.sides) total += s.boundary == Boundary::periodic ? vol : vol / side * (side - 1);
  return total;
}

// Labels by depth-first search over open edges, with ids in order of the
// lowest vertex, to compare against union-find.
std::vector<std::uint32_t> dfs_labels(const LatticeGraph& g, const std::vector<bool>& open) {
  std::vector<std::uint32_t> id(g.vertex_count(), UINT32_MAX);
  std::uint32_t next = 0;
  for (VertexId s = 0; s < g.vertex_count(); ++s) {
    if (id[s] != UINT32_MAX) continue;
    std::vector<VertexId> stack{s};
    id[s] = next;
    while (!stack.empty()) {
      const VertexId v = stack.back();
      stack.pop_back();
      auto [it, end] = g.incident(v);
      for (; it != end; ++it) {
        if (!open[*it]) continue;
        const VertexId w = g.other(*it, v);
        if (id[w] == UINT32_MAX) {
          id[w] = next;
          stack.push_back(w);
        }
      }
    }
    ++next;
  }
  return id;
}

}  // namespace

TEST(BuildLattice, SmallExamples) {
  auto ring = build_lattice(LatticeSpec::ring(5));
  EXPECT_EQ(ring.vertex_count(), 5u);
  EXPECT_EQ(ring.edge_count(), 5u);
  auto box = build_lattice({{3, 3}, Boundary::free});
  EXPECT_EQ(box.vertex_count(), 9u);
  EXPECT_EQ(box.edge_count(), 12u);
  auto torus = build_lattice({{4, 4}, Boundary::periodic});
  EXPECT_EQ(torus.vertex_count(), 16u);
  EXPECT_EQ(torus.edge_count(), 32u);
}

TEST(BuildLattice, RejectsBadSides) {
  EXPECT_THROW(build_lattice({{1}, Boundary::free}), std::invalid_argument);
  EXPECT_THROW(build_lattice({{2}, Boundary::periodic}), std::invalid_argument);
  EXPECT_THROW(build_lattice({{5, 2}, Boundary::periodic}), std::invalid_argument);
  EXPECT_THROW(build_lattice({{}, Boundary::free}), std::invalid_argument);
  EXPECT_NO_THROW(build_lattice({{2, 2}, Boundary::free}));
}

TEST(BuildLattice, EdgeCountsExhaustive) {
  // every spec with d <= 4 and sides <= 10 (cubes plus mixed sides for d <= 2)
  for (std::size_t d = 1; d <= 4; ++d) {
    for (std::size_t side = 2; side <= 10; ++side) {
      for (Boundary b : {Boundary::free, Boundary::periodic}) {
        if (b == Boundary::periodic && side < 3) continue;
        const LatticeSpec s = LatticeSpec::cube(d, side, b);
        const auto g = build_lattice(s);
        ASSERT_EQ(g.edge_count(), expected_edges(s)) << d << " " << side;
      }
    }
  }
  for (std::size_t a = 2; a <= 10; ++a)
    for (std::size_t c = 2; c <= 10; ++c)
      for (Boundary b : {Boundary::free, Boundary::periodic}) {
        if (b == Boundary::periodic && (a < 3 || c < 3)) continue;
        const LatticeSpec s{{a, c}, b};
        ASSERT_EQ(build_lattice(s).edge_count(), expected_edges(s));
      }
}

TEST(BuildLattice, SimpleGraphAndDegrees) {
  for (const LatticeSpec& s :
       {LatticeSpec::cube(2, 4), LatticeSpec::cube(3, 3), LatticeSpec{{3, 5, 4}, Boundary::free}, LatticeSpec::ring(3)}) {
    const auto g = build_lattice(s);
    std::set<std::pair<VertexId, VertexId>> seen;
    for (const Edge& e : g.edges()) {
      EXPECT_LT(e.u, e.v);
      EXPECT_TRUE(seen.insert({e.u, e.v}).second);
    }
    EXPECT_TRUE(std::is_sorted(g.edges().begin(), g.edges().end()));
    for (VertexId v = 0; v < g.vertex_count(); ++v) {
      if (s.boundary == Boundary::periodic)
        EXPECT_EQ(g.degree(v), 2 * s.dimension());
      else
        EXPECT_LE(g.degree(v), 2 * s.dimension());
    }
  }
}

TEST(BuildLattice, RowMajorAndRingPositions) {
  const auto g = build_lattice({{3, 4}, Boundary::free});
  EXPECT_EQ(g.coordinates(5), (std::vector<std::size_t>{1, 1}));
  auto ring = build_lattice(LatticeSpec::ring(6));
  std::set<std::size_t> pos;
  for (EdgeId e = 0; e < ring.edge_count(); ++e) {
    const std::size_t i = ring.ring_position(e);
    const Edge& uv = ring.edge(e);
    EXPECT_TRUE((uv.u == i && uv.v == (i + 1) % 6) || (uv.v == i && uv.u == (i + 1) % 6));
    pos.insert(i);
  }
  EXPECT_EQ(pos.size(), 6u);
  EXPECT_EQ(find_edge(ring, 5, 0).value(), find_edge(ring, 0, 5).value());
  EXPECT_FALSE(find_edge(ring, 0, 2).has_value());
}

TEST(EdgeBoundary, ClosedForm) {
  EXPECT_EQ(edge_boundary_size(2, 1), 12u);
  EXPECT_EQ(edge_boundary_size(1, 0), 2u);
  EXPECT_EQ(edge_boundary_size(3, 2), 150u);
  EXPECT_EQ(box_volume(3, 2), 125u);
}

TEST(EdgeBoundary, EnumeratedOnLargerBox) {
  // Place the box [-n, n]^d in the middle of a free box of side 2n + 3 and count
  // edges with exactly one endpoint inside.
  for (std::size_t d = 1; d <= 3; ++d) {
    for (std::size_t n = 0; n <= 3; ++n) {
      const std::size_t side = 2 * n + 3;
      const auto g = build_lattice(LatticeSpec::cube(d, side, Boundary::free));
      auto inside = [&](VertexId v) {
        for (auto c : g.coordinates(v))
          if (c < 1 || c > 2 * n + 1) return false;
        return true;
      };
      std::uint64_t count = 0;
      std::uint64_t volume = 0;
      for (const Edge& e : g.edges()) count += inside(e.u) != inside(e.v);
      for (VertexId v = 0; v < g.vertex_count(); ++v) volume += inside(v);
      EXPECT_EQ(count, edge_boundary_size(d, n)) << d << " " << n;
      EXPECT_EQ(volume, box_volume(d, n));
    }
  }
}

TEST(Percolate, Extremes) {
  const auto g = build_lattice(LatticeSpec::cube(2, 10));
  EXPECT_EQ(percolate(g, 1.0, 3).open_count(), g.edge_count());
  const auto g2 = build_lattice(LatticeSpec::ring(1000));
  EXPECT_EQ(percolate(g2, 1e-12, 3).open_count(), 0u);
  EXPECT_THROW(percolate(g, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(percolate(g, 1.5, 1), std::invalid_argument);
}

TEST(Percolate, OpenFractionConcentrates) {
  const auto g = build_lattice(LatticeSpec::cube(2, 64));
  const double p = 0.7;
  const auto s = percolate(g, p, 12345);
  const double frac = static_cast<double>(s.open_count()) / g.edge_count();
  // 99% binomial band: 2.576 standard errors, about 0.0066 for 8192 edges
  const double band = 2.576 * std::sqrt(p * (1 - p) / g.edge_count());
  EXPECT_LT(band, 0.02);
  EXPECT_NEAR(frac, p, band);
}

TEST(Percolate, Reproducible) {
  const auto g = build_lattice(LatticeSpec::cube(3, 6));
  EXPECT_EQ(percolate(g, 0.4, 99), percolate(g, 0.4, 99));
  EXPECT_NE(percolate(g, 0.4, 99).open, percolate(g, 0.4, 100).open);
}

TEST(Percolate, TextRoundTrip) {
  const LatticeSpec spec{{7, 5}, Boundary::periodic};
  const auto g = build_lattice(spec);
  const auto s = percolate(g, 0.3, 77);
  std::stringstream ss;
  write_percolation(ss, spec, s);
  auto [spec2, s2] = read_percolation(ss);
  EXPECT_EQ(spec2, spec);
  EXPECT_EQ(s2, s);
  std::stringstream bad("deffuant-percolation 2\n");
  EXPECT_THROW(read_percolation(bad), std::runtime_error);
}

TEST(LabelClusters, AllOpenAndAllClosed) {
  const auto g = build_lattice(LatticeSpec::cube(2, 6));
  PercolationSample all{std::vector<bool>(g.edge_count(), true), 1.0, 0};
  auto lab = label_clusters(g, all);
  EXPECT_EQ(lab.cluster_count(), 1u);
  EXPECT_EQ(lab.largest_size(), g.vertex_count());
  EXPECT_TRUE(lab.spanning);
  PercolationSample none{std::vector<bool>(g.edge_count(), false), 1e-9, 0};
  lab = label_clusters(g, none);
  EXPECT_EQ(lab.cluster_count(), g.vertex_count());
  EXPECT_EQ(lab.largest, 0u);
  EXPECT_FALSE(lab.spanning);
  PercolationSample wrong{std::vector<bool>(3, true), 1.0, 0};
  EXPECT_THROW(label_clusters(g, wrong), std::invalid_argument);
}

TEST(LabelClusters, AgreesWithDepthFirstSearch) {
  CounterRng rng(2024, 0, Purpose::test);
  const std::vector<LatticeSpec> specs{LatticeSpec::cube(2, 10), LatticeSpec{{10, 10}, Boundary::free},
                                       LatticeSpec::cube(3, 5), LatticeSpec::ring(200),
                                       LatticeSpec{{4, 7, 6}, Boundary::free}};
  for (const auto& spec : specs) {
    const auto g = build_lattice(spec);
    for (int trial = 0; trial < 40; ++trial) {
      const double p = rng.uniform(0.05, 0.95);
      const auto s = percolate(g, p, rng());
      const auto lab = label_clusters(g, s);
      const auto ref = dfs_labels(g, s.open);
      ASSERT_EQ(lab.cluster_of, ref);
      std::size_t total = 0;
      for (auto sz : lab.sizes) total += sz;
      EXPECT_EQ(total, g.vertex_count());
      std::size_t best = 0;
      for (std::size_t i = 0; i < lab.sizes.size(); ++i)
        if (lab.sizes[i] > lab.sizes[best]) best = i;
      EXPECT_EQ(lab.largest, best);
      const auto edges = cluster_edges(g, s, lab, lab.largest);
      for (EdgeId e : edges) EXPECT_EQ(lab.cluster_of[g.edge(e).v], lab.largest);
    }
  }
}

TEST(LabelClusters, SpanningOnTorusNeedsWinding) {
  // A single straight line of open edges along axis 0 that closes on itself winds.
  const auto g = build_lattice(LatticeSpec::cube(2, 5));
  PercolationSample s{std::vector<bool>(g.edge_count(), false), 0.5, 0};
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const Edge& uv = g.edge(e);
    const auto cu = g.coordinates(uv.u);
    const auto cv = g.coordinates(uv.v);
    if (cu[1] == 0 && cv[1] == 0) s.open[e] = true;
  }
  EXPECT_TRUE(label_clusters(g, s).spanning);
  // remove one edge: a path of 5 vertices, no winding
  for (EdgeId e = 0; e < g.edge_count(); ++e)
    if (s.open[e]) {
      s.open[e] = false;
      break;
    }
  const auto lab = label_clusters(g, s);
  EXPECT_EQ(lab.largest_size(), 5u);
  EXPECT_FALSE(lab.spanning);
}

TEST(LabelClusters, SupercriticalGiantCluster) {
  const auto g = build_lattice(LatticeSpec::cube(2, 128));
  int big = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto lab = label_clusters(g, percolate(g, 0.7, seed));
    big += lab.largest_size() * 2 > g.vertex_count();
  }
  EXPECT_GE(big, 99);
}

TEST(LabelClusters, SpanningProbabilitySweepLocatesThreshold) {
  // On a 32^2 torus the winding probability rises from near 0 to near 1 around p = 1/2.
  const auto g = build_lattice(LatticeSpec::cube(2, 32));
  auto spanning_rate = [&](double p) {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) hits += label_clusters(g, percolate(g, p, seed)).spanning;
    return hits / 100.0;
  };
  EXPECT_LT(spanning_rate(0.35), 0.1);
  EXPECT_GT(spanning_rate(0.65), 0.9);
  const double mid = spanning_rate(0.5);
  EXPECT_GT(mid, 0.1);
  EXPECT_LT(mid, 0.9);
}

TEST(CouplePercolation, DifferOnlyAtPivot) {
  const auto g = build_lattice(LatticeSpec::cube(2, 8));
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const EdgeId pivot = static_cast<EdgeId>(seed % g.edge_count());
    auto [a, b] = couple_percolation(g, 0.6, seed, pivot);
    for (EdgeId e = 0; e < g.edge_count(); ++e) {
      if (e != pivot) {
        ASSERT_EQ(a.open[e], b.open[e]);
      }
    }
    EXPECT_EQ(a, percolate(g, 0.6, seed));
  }
  EXPECT_THROW(couple_percolation(g, 1.0, 1, 0), std::invalid_argument);
  EXPECT_THROW(couple_percolation(g, 0.5, 1, 100000), std::out_of_range);
}

TEST(CouplePercolation, PivotFrequencies) {
  const auto g = build_lattice(LatticeSpec::cube(2, 8));
  const EdgeId pivot = 17;
  for (double p : {0.5, 0.8, 0.3}) {
    const int n = 10000;
    int event = 0, open1 = 0, open2 = 0;
    for (std::uint64_t seed = 0; seed < n; ++seed) {
      auto c = couple_percolation(g, p, seed, pivot);
      event += pivot_closed_then_open(c, pivot);
      open1 += c.first.open[pivot];
      open2 += c.second.open[pivot];
    }
    const double band = 3 * std::sqrt(0.25 / n);
    EXPECT_NEAR(event / double(n), std::min(p, 1 - p), 0.02) << p;
    EXPECT_NEAR(open1 / double(n), p, band) << p;
    EXPECT_NEAR(open2 / double(n), p, band) << p;
  }
}

TEST(CouplePercolation, MarginalPerEdgeFrequencies) {
  const auto g = build_lattice(LatticeSpec::cube(2, 4));
  const double p = 0.7;
  const int n = 4000;
  std::vector<int> open2(g.edge_count(), 0);
  for (std::uint64_t seed = 0; seed < n; ++seed) {
    auto c = couple_percolation(g, p, seed, static_cast<EdgeId>(seed % g.edge_count()));
    for (EdgeId e = 0; e < g.edge_count(); ++e) open2[e] += c.second.open[e];
  }
  // 32 edges tested at 3.5 standard errors each
  const double band = 3.5 * std::sqrt(p * (1 - p) / n);
  for (EdgeId e = 0; e < g.edge_count(); ++e) EXPECT_NEAR(open2[e] / double(n), p, band) << e;
}

#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deffuant/rng.hpp"

namespace deffuant {

using VertexId = std::uint32_t;
using EdgeId = std::uint32_t;

enum class Boundary { periodic, free };

inline const char* to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "free"; }

inline Boundary parse_boundary(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "free") return Boundary::free;
  throw std::invalid_argument("unknown boundary '" + s + "' (expected periodic or free)");
}

// A d-dimensional box or torus. The lattice dimension is sides.size().
struct LatticeSpec {
  std::vector<std::size_t> sides;
  Boundary boundary = Boundary::periodic;

  static LatticeSpec ring(std::size_t n) { return {{n}, Boundary::periodic}; }
  static LatticeSpec cube(std::size_t d, std::size_t side, Boundary b = Boundary::periodic) {
    return {std::vector<std::size_t>(d, side), b};
  }

  [[nodiscard]] std::size_t dimension() const { return sides.size(); }

  [[nodiscard]] std::size_t volume() const {
    return std::accumulate(sides.begin(), sides.end(), std::size_t{1}, std::multiplies<>());
  }

  void validate() const {
    if (sides.empty()) throw std::invalid_argument("lattice dimension must be at least 1");
    for (std::size_t s : sides) {
      if (s < 2) throw std::invalid_argument("lattice side lengths must be at least 2");
      if (boundary == Boundary::periodic && s < 3)
        throw std::invalid_argument("periodic lattices need side length at least 3");
    }
  }

  bool operator==(const LatticeSpec&) const = default;
};

struct Edge {
  VertexId u;  // u < v
  VertexId v;
  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

/// Simple graph realizing a LatticeSpec.
///
/// Vertices are indexed row-major (last axis fastest) and edges are sorted
/// lexicographically by their (smaller, larger) endpoint pair. Incident edges
/// of every vertex are stored in CSR form.
class LatticeGraph {
 public:
  explicit LatticeGraph(LatticeSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const std::size_t d = spec_.dimension();
    const std::size_t n = spec_.volume();
    if (n > std::numeric_limits<VertexId>::max()) throw std::invalid_argument("lattice too large");

    strides_.assign(d, 1);
    for (std::size_t i = d; i-- > 1;) strides_[i - 1] = strides_[i] * spec_.sides[i];

    std::vector<std::size_t> coord(d, 0);
    edges_.reserve(n * d);
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t axis = 0; axis < d; ++axis) {
        const std::size_t side = spec_.sides[axis];
        std::size_t w = 0;
        if (coord[axis] + 1 < side) {
          w = v + strides_[axis];
        } else if (spec_.boundary == Boundary::periodic) {
          w = v - (side - 1) * strides_[axis];
        } else {
          continue;
        }
        edges_.push_back({static_cast<VertexId>(std::min(v, w)), static_cast<VertexId>(std::max(v, w))});
      }
      for (std::size_t axis = d; axis-- > 0;) {
        if (++coord[axis] < spec_.sides[axis]) break;
        coord[axis] = 0;
      }
    }
    std::sort(edges_.begin(), edges_.end());

    offsets_.assign(n + 1, 0);
    for (const Edge& e : edges_) {
      ++offsets_[e.u + 1];
      ++offsets_[e.v + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    incident_.resize(2 * edges_.size());
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (EdgeId id = 0; id < edges_.size(); ++id) {
      incident_[fill[edges_[id].u]++] = id;
      incident_[fill[edges_[id].v]++] = id;
    }
  }

  [[nodiscard]] const LatticeSpec& spec() const { return spec_; }
  [[nodiscard]] std::size_t dimension() const { return spec_.dimension(); }
  [[nodiscard]] std::size_t vertex_count() const { return offsets_.size() - 1; }
  [[nodiscard]] std::size_t edge_count() const { return edges_.size(); }
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
  [[nodiscard]] const Edge& edge(EdgeId e) const { return edges_[e]; }

  [[nodiscard]] std::size_t degree(VertexId v) const { return offsets_[v + 1] - offsets_[v]; }

  // Edge ids incident to v.
  [[nodiscard]] std::pair<const EdgeId*, const EdgeId*> incident(VertexId v) const {
    return {incident_.data() + offsets_[v], incident_.data() + offsets_[v + 1]};
  }

  [[nodiscard]] VertexId other(EdgeId e, VertexId v) const {
    return edges_[e].u == v ? edges_[e].v : edges_[e].u;
  }

  [[nodiscard]] std::vector<std::size_t> coordinates(VertexId v) const {
    std::vector<std::size_t> c(dimension());
    std::size_t rest = v;
    for (std::size_t i = 0; i < dimension(); ++i) {
      c[i] = rest / strides_[i];
      rest %= strides_[i];
    }
    return c;
  }

  [[nodiscard]] std::size_t stride(std::size_t axis) const { return strides_[axis]; }

  // Axis along which e runs and whether going u -> v increases that coordinate
  // by one (false means a decrease, possibly through the periodic seam).
  [[nodiscard]] std::pair<std::size_t, bool> orientation(EdgeId e) const {
    const auto cu = coordinates(edges_[e].u);
    const auto cv = coordinates(edges_[e].v);
    for (std::size_t axis = 0; axis < dimension(); ++axis) {
      if (cu[axis] == cv[axis]) continue;
      return {axis, cv[axis] == cu[axis] + 1};
    }
    throw std::logic_error("degenerate edge");
  }

  // Position of a ring edge in cyclic order: edge <i, i+1 mod N> has position i.
  [[nodiscard]] std::size_t ring_position(EdgeId e) const {
    if (dimension() != 1) throw std::invalid_argument("ring_position needs a 1-dimensional lattice");
    const Edge& ed = edges_[e];
    return ed.v == ed.u + 1 ? ed.u : ed.v;
  }

 private:
  LatticeSpec spec_;
  std::vector<std::size_t> strides_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<EdgeId> incident_;
};

inline LatticeGraph build_lattice(const LatticeSpec& spec) { return LatticeGraph(spec); }

inline std::optional<EdgeId> find_edge(const LatticeGraph& g, VertexId u, VertexId v) {
  auto [it, end] = g.incident(u);
  for (; it != end; ++it)
    if (g.other(*it, u) == v) return *it;
  return std::nullopt;
}

// Number of edges leaving the box [-n, n]^d of Z^d: 2d (2n+1)^(d-1).
constexpr std::uint64_t edge_boundary_size(std::uint64_t d, std::uint64_t n) {
  std::uint64_t side_pow = 1;
  for (std::uint64_t i = 1; i < d; ++i) side_pow *= 2 * n + 1;
  return 2 * d * side_pow;
}

constexpr std::uint64_t box_volume(std::uint64_t d, std::uint64_t n) {
  std::uint64_t v = 1;
  for (std::uint64_t i = 0; i < d; ++i) v *= 2 * n + 1;
  return v;
}

// Open/closed state of every edge of a graph.
struct PercolationSample {
  std::vector<bool> open;
  double p = 1.0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t open_count() const {
    return static_cast<std::size_t>(std::count(open.begin(), open.end(), true));
  }
  bool operator==(const PercolationSample&) const = default;
};

namespace detail {
inline void check_probability(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("percolation parameter must lie in (0, 1]");
}

// The per-edge uniform used by both percolate() and couple_percolation().
inline double edge_uniform(std::uint64_t seed, EdgeId e) {
  const CounterRng rng(seed, 0, Purpose::percolation);
  return CounterRng::to_open_unit(rng.at(e));
}
}  // namespace detail

// Each edge is open independently with probability p; edge e uses draw e of
// the seed's percolation stream, so a sample depends only on (edge count, p, seed).
inline PercolationSample percolate(const LatticeGraph& graph, double p, std::uint64_t seed) {
  detail::check_probability(p);
  PercolationSample s{std::vector<bool>(graph.edge_count()), p, seed};
  for (EdgeId e = 0; e < graph.edge_count(); ++e) s.open[e] = detail::edge_uniform(seed, e) < p;
  return s;
}

/// Two percolation samples sharing every edge except `pivot`. With U the
/// pivot's uniform, the pivot is open in the first copy iff U < p and in the
/// second iff U > 1 - p, so both are i.i.d. Bernoulli(p) marginally and the
/// pivot is closed in the first and open in the second with probability
/// min{p, 1 - p}.
inline std::pair<PercolationSample, PercolationSample> couple_percolation(const LatticeGraph& graph, double p,
                                                                          std::uint64_t seed, EdgeId pivot) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("coupling needs p strictly inside (0, 1)");
  if (pivot >= graph.edge_count()) throw std::out_of_range("pivot edge out of range");
  PercolationSample first = percolate(graph, p, seed);
  PercolationSample second = first;
  second.open[pivot] = detail::edge_uniform(seed, pivot) > 1.0 - p;
  return {std::move(first), std::move(second)};
}

inline bool pivot_closed_then_open(const std::pair<PercolationSample, PercolationSample>& c, EdgeId pivot) {
  return !c.first.open[pivot] && c.second.open[pivot];
}

struct ClusterLabeling {
  std::vector<std::uint32_t> cluster_of;  // per vertex; ids ordered by lowest member vertex
  std::vector<std::size_t> sizes;         // per cluster id
  std::uint32_t largest = 0;              // ties go to the lowest id
  bool spanning = false;                  // largest cluster wraps (torus) or joins opposite faces (box)

  [[nodiscard]] std::size_t cluster_count() const { return sizes.size(); }
  [[nodiscard]] std::size_t largest_size() const { return sizes[largest]; }
};

namespace detail {
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

inline bool largest_spans(const LatticeGraph& g, const std::vector<bool>& open, const ClusterLabeling& lab) {
  const std::size_t d = g.dimension();
  VertexId root = 0;
  while (lab.cluster_of[root] != lab.largest) ++root;

  if (g.spec().boundary == Boundary::free) {
    std::vector<bool> low(d, false), high(d, false);
    for (VertexId v = 0; v < g.vertex_count(); ++v) {
      if (lab.cluster_of[v] != lab.largest) continue;
      const auto c = g.coordinates(v);
      for (std::size_t a = 0; a < d; ++a) {
        low[a] = low[a] || c[a] == 0;
        high[a] = high[a] || c[a] + 1 == g.spec().sides[a];
      }
    }
    for (std::size_t a = 0; a < d; ++a)
      if (low[a] && high[a]) return true;
    return false;
  }

  // Torus: BFS with unwrapped displacements; reaching a vertex with two
  // different displacements means the cluster winds around the torus.
  std::vector<std::vector<long>> disp(g.vertex_count());
  std::queue<VertexId> todo;
  disp[root].assign(d, 0);
  todo.push(root);
  while (!todo.empty()) {
    const VertexId u = todo.front();
    todo.pop();
    auto [it, end] = g.incident(u);
    for (; it != end; ++it) {
      const EdgeId e = *it;
      if (!open[e]) continue;
      const VertexId w = g.other(e, u);
      auto [axis, forward] = g.orientation(e);
      const long step = (g.edge(e).u == u) == forward ? 1 : -1;
      std::vector<long> expected = disp[u];
      expected[axis] += step;
      if (disp[w].empty()) {
        disp[w] = std::move(expected);
        todo.push(w);
      } else if (disp[w] != expected) {
        return true;
      }
    }
  }
  return false;
}
}  // namespace detail

// Union-find labeling of the open subgraph.
inline ClusterLabeling label_clusters(const LatticeGraph& graph, const PercolationSample& sample) {
  if (sample.open.size() != graph.edge_count())
    throw std::invalid_argument("percolation sample does not match the graph's edge count");
  detail::UnionFind uf(graph.vertex_count());
  for (EdgeId e = 0; e < graph.edge_count(); ++e)
    if (sample.open[e]) uf.unite(graph.edge(e).u, graph.edge(e).v);

  ClusterLabeling lab;
  lab.cluster_of.assign(graph.vertex_count(), 0);
  std::vector<std::int64_t> id_of_root(graph.vertex_count(), -1);
  for (VertexId v = 0; v < graph.vertex_count(); ++v) {
    const std::size_t r = uf.find(v);
    if (id_of_root[r] < 0) {
      id_of_root[r] = static_cast<std::int64_t>(lab.sizes.size());
      lab.sizes.push_back(0);
    }
    lab.cluster_of[v] = static_cast<std::uint32_t>(id_of_root[r]);
    ++lab.sizes[lab.cluster_of[v]];
  }
  lab.largest = static_cast<std::uint32_t>(std::max_element(lab.sizes.begin(), lab.sizes.end()) - lab.sizes.begin());
  lab.spanning = detail::largest_spans(graph, sample.open, lab);
  return lab;
}

// Open edges with both endpoints in cluster `id`, in edge-id order.
inline std::vector<EdgeId> cluster_edges(const LatticeGraph& graph, const PercolationSample& sample,
                                         const ClusterLabeling& lab, std::uint32_t id) {
  std::vector<EdgeId> out;
  for (EdgeId e = 0; e < graph.edge_count(); ++e)
    if (sample.open[e] && lab.cluster_of[graph.edge(e).u] == id) out.push_back(e);
  return out;
}

// Plain-text replay format:
//
//   deffuant-percolation 1
//   sides 128 128
//   boundary periodic
//   p 0.69999999999999996
//   seed 42
//   edges 32768
//   bitmap <hex>
//
// The bitmap packs edge e into bit (e % 8) of byte (e / 8), bytes written as
// two lowercase hex digits each.
inline void write_percolation(std::ostream& os, const LatticeSpec& spec, const PercolationSample& s) {
  os << "deffuant-percolation 1\n";
  os << "dimension " << spec.dimension() << "\nsides";
  for (std::size_t side : spec.sides) os << ' ' << side;
  os << "\nboundary " << to_string(spec.boundary) << '\n';
  os << "p " << std::setprecision(17) << s.p << '\n';
  os << "seed " << s.seed << '\n';
  os << "edges " << s.open.size() << "\nbitmap ";
  static constexpr char hex[] = "0123456789abcdef";
  for (std::size_t byte = 0; byte * 8 < s.open.size(); ++byte) {
    unsigned value = 0;
    for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < s.open.size(); ++bit)
      if (s.open[byte * 8 + bit]) value |= 1U << bit;
    os << hex[value >> 4] << hex[value & 15];
  }
  os << '\n';
}

inline std::pair<LatticeSpec, PercolationSample> read_percolation(std::istream& is) {
  auto expect = [&](const std::string& key) {
    std::string word;
    if (!(is >> word) || word != key) throw std::runtime_error("percolation file: expected '" + key + "'");
  };
  expect("deffuant-percolation");
  int version = 0;
  is >> version;
  if (version != 1) throw std::runtime_error("percolation file: unsupported version");
  LatticeSpec spec;
  std::size_t d = 0;
  expect("dimension");
  is >> d;
  expect("sides");
  spec.sides.resize(d);
  for (auto& side : spec.sides) is >> side;
  expect("boundary");
  std::string boundary;
  is >> boundary;
  spec.boundary = parse_boundary(boundary);
  PercolationSample s;
  expect("p");
  is >> s.p;
  expect("seed");
  is >> s.seed;
  std::size_t edges = 0;
  expect("edges");
  is >> edges;
  expect("bitmap");
  std::string hex;
  is >> hex;
  if (!is || hex.size() != 2 * ((edges + 7) / 8)) throw std::runtime_error("percolation file: bad bitmap length");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    throw std::runtime_error("percolation file: bad hex digit");
  };
  s.open.assign(edges, false);
  for (std::size_t byte = 0; byte * 8 < edges; ++byte) {
    const unsigned value = nibble(hex[2 * byte]) << 4 | nibble(hex[2 * byte + 1]);
    for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < edges; ++bit) s.open[byte * 8 + bit] = (value >> bit) & 1U;
  }
  return {spec, s};
}

}  // namespace deffuant

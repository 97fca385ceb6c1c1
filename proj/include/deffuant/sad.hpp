#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "deffuant/engine.hpp"
#include "deffuant/lattice.hpp"

namespace deffuant {

// Sparse weight vector over the vertices of a ring.
struct SadProfile {
  std::map<VertexId, double> weights;

  static SadProfile indicator(VertexId v) { return SadProfile{{{v, 1.0}}}; }

  [[nodiscard]] double weight(VertexId v) const {
    auto it = weights.find(v);
    return it == weights.end() ? 0.0 : it->second;
  }

  [[nodiscard]] double total() const {
    double s = 0;
    for (auto& [v, w] : weights) s += w;
    return s;
  }

  // Sum of weight(u) * field[u].
  [[nodiscard]] double apply(const std::vector<double>& field) const {
    double s = 0;
    for (auto& [v, w] : weights) s += w * field[v];
    return s;
  }

  bool operator==(const SadProfile&) const = default;
};

namespace detail {
inline void require_ring(const LatticeGraph& g) {
  if (g.dimension() != 1 || g.spec().boundary != Boundary::periodic)
    throw std::invalid_argument("SAD profiles live on a ring");
}

inline bool ring_adjacent(std::size_t n, VertexId u, VertexId v) {
  return u != v && ((u + 1) % n == v || (v + 1) % n == u);
}
}  // namespace detail

// The support of a profile is an arc of the ring (or the whole ring).
inline bool support_is_arc(const SadProfile& p, std::size_t ring_length) {
  if (p.weights.empty()) return false;
  if (p.weights.size() == ring_length) return true;
  std::size_t arc_ends = 0;
  for (auto& [v, w] : p.weights)
    if (!p.weights.count(static_cast<VertexId>((v + 1) % ring_length))) ++arc_ends;
  return arc_ends == 1;
}

// Moves the weights at u and v toward each other by the fraction mu.
inline void sad_step(SadProfile& p, std::size_t ring_length, VertexId u, VertexId v, double mu) {
  if (!detail::ring_adjacent(ring_length, u, v)) throw std::invalid_argument("sad_step needs adjacent vertices");
  const double wu = p.weight(u);
  const double wv = p.weight(v);
  if (wu == 0.0 && wv == 0.0) return;
  p.weights[u] = (1.0 - mu) * wu + mu * wv;
  p.weights[v] = (1.0 - mu) * wv + mu * wu;
  assert(support_is_arc(p, ring_length));
}

inline SadProfile sad_step(SadProfile p, const LatticeGraph& ring, VertexId u, VertexId v, double mu) {
  detail::require_ring(ring);
  sad_step(p, ring.vertex_count(), u, v, mu);
  return p;
}

// Weight profile A with sum_u A(u) * eta_0(u) == eta_t(v): the accepted events
// up to time t are applied to the indicator of v in reverse order.
inline SadProfile backward_profile(const LatticeGraph& ring, const EventLog& log, double mu, VertexId v, double t) {
  detail::require_ring(ring);
  if (t > log.horizon) throw std::invalid_argument("log does not cover the requested time");
  if (v >= ring.vertex_count()) throw std::invalid_argument("vertex out of range");
  SadProfile p = SadProfile::indicator(v);
  auto it = log.events.rbegin();
  while (it != log.events.rend() && it->time > t) ++it;
  for (; it != log.events.rend(); ++it) {
    if (!it->accepted) continue;
    const Edge& e = ring.edge(it->edge);
    sad_step(p, ring.vertex_count(), e.u, e.v, mu);
  }
  return p;
}

// Weights along the support rise (weakly) to a single plateau and then fall.
// Arcs are read from their first vertex; a profile covering the whole ring is
// read starting at a smallest weight.
inline bool is_unimodal(const SadProfile& p, std::size_t ring_length) {
  if (p.weights.empty()) return false;
  const double tol = 1e-15;
  VertexId start = p.weights.begin()->first;
  if (p.weights.size() == ring_length) {
    for (auto& [v, w] : p.weights)
      if (w < p.weight(start)) start = v;
  } else {
    for (auto& [v, w] : p.weights) {
      if (!p.weights.count(static_cast<VertexId>((v + ring_length - 1) % ring_length))) start = v;
    }
  }
  bool falling = false;
  double prev = p.weight(start);
  for (std::size_t k = 1; k < p.weights.size(); ++k) {
    const double w = p.weight(static_cast<VertexId>((start + k) % ring_length));
    if (w < prev - tol) falling = true;
    if (falling && w > prev + tol) return false;
    prev = w;
  }
  return true;
}

// True when no weight exceeds the weight at v.
inline bool peaks_at(const SadProfile& p, VertexId v) {
  const double wv = p.weight(v);
  for (auto& [x, w] : p.weights)
    if (w > wv + 1e-15) return false;
  return true;
}

enum class FlatDirection { right, left, two_sided };

inline const char* to_string(FlatDirection d) {
  switch (d) {
    case FlatDirection::right: return "right";
    case FlatDirection::left: return "left";
    case FlatDirection::two_sided: return "two_sided";
  }
  return "?";
}

struct FlatnessReport {
  VertexId vertex = 0;
  double epsilon = 0;
  FlatDirection direction = FlatDirection::right;
  std::size_t window = 0;  // longest window examined (the truncation used)
  bool flat = true;
  double worst_average = 0.5;  // window average farthest from 1/2
};

inline constexpr std::size_t kDefaultFlatWindow = 64;

// Window averages are computed in floating point; a deviation may exceed eps by
// this much before the window counts as failing.
inline constexpr double kFlatSlack = 1e-12;

/// Window-average test of a ring configuration around v.
///
/// right:     averages of eta(v), ..., eta(v + n) for n + 1 <= window
/// left:      averages of eta(v - n), ..., eta(v) for n + 1 <= window
/// two_sided: averages of eta(v - m), ..., eta(v + n) for m + n + 1 <= window
/// Every average must lie in [1/2 - eps, 1/2 + eps], up to kFlatSlack.
inline FlatnessReport is_flat(const std::vector<double>& config, VertexId v, double eps, FlatDirection dir,
                              std::size_t window = kDefaultFlatWindow) {
  const std::size_t n = config.size();
  if (window < 1) throw std::invalid_argument("flatness window must be at least 1");
  if (window > n) throw std::invalid_argument("flatness window exceeds the configuration length");
  if (v >= n) throw std::invalid_argument("vertex out of range");
  FlatnessReport r{v, eps, dir, window, true, config[v]};
  const auto len_n = static_cast<long long>(n);
  auto at = [&](long long offset) {
    const long long i = ((static_cast<long long>(v) + offset) % len_n + len_n) % len_n;
    return config[static_cast<std::size_t>(i)];
  };
  // prefix[k] = sum of eta(v - window + 1 .. v - window + k)
  const auto w = static_cast<long long>(window);
  std::vector<double> prefix(2 * window, 0.0);
  for (long long k = 0; k + 1 < 2 * w; ++k)
    prefix[static_cast<std::size_t>(k + 1)] = prefix[static_cast<std::size_t>(k)] + at(k - w + 1);
  auto sum = [&](long long from, long long to) {  // offsets relative to v, inclusive
    return prefix[static_cast<std::size_t>(to + w)] - prefix[static_cast<std::size_t>(from + w - 1)];
  };
  double worst = -1;
  auto check = [&](long long from, long long to) {
    const double avg = sum(from, to) / static_cast<double>(to - from + 1);
    const double dev = std::abs(avg - 0.5);
    if (dev > worst) {
      worst = dev;
      r.worst_average = avg;
    }
    if (!(dev <= eps + kFlatSlack)) r.flat = false;
  };
  for (long long len = 1; len <= w; ++len) {
    if (dir == FlatDirection::right) check(0, len - 1);
    if (dir == FlatDirection::left) check(-(len - 1), 0);
    if (dir == FlatDirection::two_sided)
      for (long long m = 0; m < len; ++m) check(-m, len - 1 - m);
  }
  return r;
}

struct DriftReport {
  VertexId vertex = 0;
  double epsilon = 0;
  std::size_t window = 0;
  double max_deviation = 0;  // sup over the run of |eta_t(v) - 1/2|
  double envelope = 0;       // 8 * epsilon
  bool within_envelope = true;
};

// Runs `sim` for `events` further events while tracking |eta_t(v) - 1/2|.
// v must pass the two-sided flatness test on sim's current configuration.
inline DriftReport flat_drift_monitor(Simulation& sim, VertexId v, double eps, std::uint64_t events,
                                      std::size_t window = kDefaultFlatWindow) {
  const FlatnessReport cert = is_flat(sim.values(), v, eps, FlatDirection::two_sided, window);
  if (!cert.flat) throw std::invalid_argument("vertex is not two-sidedly flat in the starting configuration");
  DriftReport r{v, eps, window, std::abs(sim.values()[v] - 0.5), 8.0 * eps, true};
  sim.run_events(events, [&](const Event& ev, const Simulation& s) {
    if (!ev.accepted) return;
    const Edge& e = s.graph().edge(ev.edge);
    if (e.u != v && e.v != v) return;
    r.max_deviation = std::max(r.max_deviation, std::abs(s.values()[v] - 0.5));
  });
  r.within_envelope = r.max_deviation <= r.envelope;
  return r;
}

inline void write_profile_csv(std::ostream& os, const SadProfile& p) {
  os << "vertex,weight\n";
  for (auto& [v, w] : p.weights) os << v << ',' << detail::format_double(w) << '\n';
}

}  // namespace deffuant

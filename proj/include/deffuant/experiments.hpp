#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "deffuant/distribution.hpp"
#include "deffuant/engine.hpp"
#include "deffuant/init.hpp"
#include "deffuant/lattice.hpp"
#include "deffuant/stats.hpp"

namespace deffuant {

enum class ConsensusClass { no_consensus, weak_consensus, strong_consensus, undecided };

inline const char* to_string(ConsensusClass c) {
  switch (c) {
    case ConsensusClass::no_consensus: return "no_consensus";
    case ConsensusClass::weak_consensus: return "weak_consensus";
    case ConsensusClass::strong_consensus: return "strong_consensus";
    case ConsensusClass::undecided: return "undecided";
  }
  return "?";
}

// How an asymptotic outcome is read off a finite run.
//
// An edge counts as finally blocked when its gap exceeds theta at the horizon T
// and it accepted no event in (q T, T].
struct ClassifyOptions {
  double delta = 1e-2;  // convergence tolerance for gaps and for the strong-consensus target
  double quiet_fraction = 0.5;  // q
};

struct ExperimentConfig {
  LatticeSpec lattice = LatticeSpec::ring(1000);
  std::optional<DistributionSpec> distribution = DistributionSpec::uniform(0, 1);
  bool blocks = false;  // use the dependent block field instead of `distribution`
  double mu = 0.5;
  std::vector<double> thetas{0.5};
  std::optional<double> percolation;  // open-edge probability p
  double horizon = 5000;             // time units; each edge fires at unit rate
  std::uint64_t events = 0;          // event budget for block and drift runs (0: use horizon)
  std::uint64_t replicas = 10;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  ClassifyOptions classify;
  std::size_t checkpoints = 8;  // variance samples per run
  double ks_tolerance = 0.05;

  void validate() const {
    lattice.validate();
    if (replicas < 1) throw std::invalid_argument("replicas must be at least 1");
    if (!(horizon > 0)) throw std::invalid_argument("horizon must be positive");
    if (thetas.empty()) throw std::invalid_argument("theta list must be nonempty");
    ModelParams{mu, thetas.front()}.validate();
    for (double t : thetas) ModelParams{mu, t}.validate();
    if (!blocks && !distribution) throw std::invalid_argument("an initial law is required");
    if (percolation && !(*percolation > 0 && *percolation <= 1))
      throw std::invalid_argument("percolation p must lie in (0, 1]");
    if (!(classify.quiet_fraction >= 0 && classify.quiet_fraction < 1))
      throw std::invalid_argument("quiet fraction must lie in [0, 1)");
    if (!(classify.delta > 0)) throw std::invalid_argument("delta must be positive");
  }
};

struct RunResult {
  std::uint64_t replica = 0;
  double theta = 0;
  double horizon = 0;
  std::uint64_t events = 0;
  std::uint64_t accepted = 0;
  std::size_t active_edges = 0;
  std::size_t active_vertices = 0;
  std::size_t blocked_edges = 0;
  std::uint32_t max_blocked_degree = 0;  // max over vertices of N(v)
  double max_gap = 0;                    // over active edges
  double initial_average = 0;            // over active vertices
  double expected_mean = std::numeric_limits<double>::quiet_NaN();  // E eta_0 when known
  double max_deviation_from_average = 0;
  double max_deviation_from_expected = std::numeric_limits<double>::quiet_NaN();
  ConsensusClass outcome = ConsensusClass::undecided;
  std::vector<std::pair<double, double>> variance_trajectory;  // (time, spatial variance)
  std::size_t cluster_size = 0;  // percolation runs: vertices of the largest cluster
  std::uint32_t cluster_id = 0;
  bool cluster_spanning = false;
  std::vector<std::uint32_t> blocked_degree;  // N(v) per vertex
};

namespace detail {
inline std::vector<bool> touched_vertices(const LatticeGraph& g, const std::vector<EdgeId>& active) {
  std::vector<bool> in(g.vertex_count(), false);
  for (EdgeId e : active) {
    in[g.edge(e).u] = true;
    in[g.edge(e).v] = true;
  }
  return in;
}
}  // namespace detail

/// Reads the outcome class off a simulation at its current time.
///
/// no_consensus when some active edge is finally blocked; weak_consensus when
/// every active gap is below delta; strong_consensus when in addition every
/// active vertex is within delta of the initial average over active vertices;
/// undecided otherwise.
inline RunResult classify_outcome(const Simulation& sim, const std::vector<double>& initial,
                                  const ClassifyOptions& opt = {}) {
  const LatticeGraph& g = sim.graph();
  const auto& eta = sim.values();
  const double t = sim.time();
  RunResult r;
  r.theta = sim.params().theta;
  r.horizon = t;
  r.events = sim.event_count();
  r.accepted = sim.accepted_count();
  r.active_edges = sim.active_edges().size();
  r.blocked_degree.assign(g.vertex_count(), 0);
  const auto in = detail::touched_vertices(g, sim.active_edges());
  double sum = 0;
  for (VertexId v = 0; v < g.vertex_count(); ++v)
    if (in[v]) {
      sum += initial[v];
      ++r.active_vertices;
    }
  r.initial_average = r.active_vertices ? sum / static_cast<double>(r.active_vertices) : 0.0;
  for (EdgeId e : sim.active_edges()) {
    const Edge& uv = g.edge(e);
    const double gap = std::abs(eta[uv.u] - eta[uv.v]);
    r.max_gap = std::max(r.max_gap, gap);
    if (gap > r.theta && sim.last_accept_time(e) <= opt.quiet_fraction * t) {
      ++r.blocked_edges;
      ++r.blocked_degree[uv.u];
      ++r.blocked_degree[uv.v];
    }
  }
  for (auto d : r.blocked_degree) r.max_blocked_degree = std::max(r.max_blocked_degree, d);
  for (VertexId v = 0; v < g.vertex_count(); ++v)
    if (in[v]) r.max_deviation_from_average = std::max(r.max_deviation_from_average, std::abs(eta[v] - r.initial_average));
  if (r.blocked_edges > 0) {
    r.outcome = ConsensusClass::no_consensus;
  } else if (r.max_gap < opt.delta) {
    r.outcome = r.max_deviation_from_average < opt.delta ? ConsensusClass::strong_consensus
                                                         : ConsensusClass::weak_consensus;
  } else {
    r.outcome = ConsensusClass::undecided;
  }
  return r;
}

inline void attach_expected_mean(RunResult& r, const Simulation& sim, double expected) {
  if (!std::isfinite(expected)) return;
  r.expected_mean = expected;
  const auto in = detail::touched_vertices(sim.graph(), sim.active_edges());
  double dev = 0;
  for (VertexId v = 0; v < in.size(); ++v)
    if (in[v]) dev = std::max(dev, std::abs(sim.values()[v] - expected));
  r.max_deviation_from_expected = dev;
}

/// Evaluates f(0), ..., f(count - 1) on up to `jobs` threads. Results are
/// stored by index, so the output does not depend on scheduling.
template <class F>
auto run_replicas(std::uint64_t count, unsigned jobs, F&& f) -> std::vector<decltype(f(std::uint64_t{}))> {
  using R = decltype(f(std::uint64_t{}));
  std::vector<std::optional<R>> slots(count);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// Per-replica random inputs. Every stream depends on (seed, replica) only, so
// runs at different theta share the initial field and the event schedule.
struct ReplicaInputs {
  std::vector<double> initial;
  std::vector<EdgeId> active;  // empty: every edge
  std::optional<ClusterLabeling> clusters;
  std::optional<BlockField> blocks;
};

inline std::uint64_t percolation_seed(std::uint64_t seed, std::uint64_t replica) {
  return CounterRng::derive_key(seed, replica, Purpose::percolation);
}

inline ReplicaInputs make_replica_inputs(const ExperimentConfig& cfg, const LatticeGraph& g, std::uint64_t replica) {
  ReplicaInputs in;
  if (cfg.blocks) {
    in.blocks = sample_blocks(g, cfg.seed, replica);
    in.initial = in.blocks->field.values;
  } else {
    in.initial = sample_iid(*cfg.distribution, g, cfg.seed, replica).values;
  }
  if (cfg.percolation) {
    const auto sample = percolate(g, *cfg.percolation, percolation_seed(cfg.seed, replica));
    in.clusters = label_clusters(g, sample);
    in.active = cluster_edges(g, sample, *in.clusters, in.clusters->largest);
  }
  return in;
}

inline double expected_mean_of(const ExperimentConfig& cfg) {
  if (cfg.blocks) return 0.5;
  return mean(*cfg.distribution);
}

// One replica at one theta, run to the configured horizon.
inline RunResult run_replica(const ExperimentConfig& cfg, const LatticeGraph& g, const ReplicaInputs& in,
                             double theta, std::uint64_t replica) {
  RunResult r;
  if (cfg.percolation && in.active.empty()) {
    // isolated largest "cluster": nothing can happen
    r.replica = replica;
    r.theta = theta;
    r.horizon = cfg.horizon;
    r.cluster_size = in.clusters ? in.clusters->largest_size() : 0;
    r.outcome = ConsensusClass::strong_consensus;
    return r;
  }
  Simulation sim(g, in.initial, ModelParams{cfg.mu, theta}, cfg.seed, replica, in.active, false);
  std::vector<std::pair<double, double>> traj;
  auto sample_variance = [&] {
    traj.emplace_back(sim.time(), stats::variance(sim.values()));
  };
  sample_variance();
  const std::size_t k = std::max<std::size_t>(1, cfg.checkpoints);
  for (std::size_t i = 1; i <= k; ++i) {
    sim.run_until(cfg.horizon * static_cast<double>(i) / static_cast<double>(k));
    sample_variance();
  }
  r = classify_outcome(sim, in.initial, cfg.classify);
  attach_expected_mean(r, sim, expected_mean_of(cfg));
  r.replica = replica;
  r.variance_trajectory = std::move(traj);
  if (in.clusters) {
    r.cluster_id = in.clusters->largest;
    r.cluster_size = in.clusters->largest_size();
    r.cluster_spanning = in.clusters->spanning;
  }
  return r;
}

struct SweepRow {
  double theta = 0;
  std::uint64_t replicas = 0;
  double blocked_fraction = 0;  // replicas with at least one finally blocked edge
  double mean_blocked_edge_fraction = 0;
  double weak_fraction = 0;    // weak or strong consensus
  double strong_fraction = 0;
  double undecided_fraction = 0;
  double mean_max_deviation_from_expected = std::numeric_limits<double>::quiet_NaN();
  double mean_cluster_fraction = std::numeric_limits<double>::quiet_NaN();
  std::vector<RunResult> runs;  // sorted by replica
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double crossing = std::numeric_limits<double>::quiet_NaN();  // blocked fraction crosses 1/2
  std::vector<std::string> warnings;
};

inline SweepRow aggregate(double theta, std::vector<RunResult> runs, std::size_t vertex_count) {
  SweepRow row;
  row.theta = theta;
  row.replicas = runs.size();
  double dev = 0;
  double cluster = 0;
  bool have_dev = true;
  for (auto& r : runs) {
    row.blocked_fraction += r.blocked_edges > 0;
    row.mean_blocked_edge_fraction +=
        r.active_edges ? static_cast<double>(r.blocked_edges) / static_cast<double>(r.active_edges) : 0.0;
    row.weak_fraction += r.outcome == ConsensusClass::weak_consensus || r.outcome == ConsensusClass::strong_consensus;
    row.strong_fraction += r.outcome == ConsensusClass::strong_consensus;
    row.undecided_fraction += r.outcome == ConsensusClass::undecided;
    if (std::isnan(r.max_deviation_from_expected)) have_dev = false;
    dev += r.max_deviation_from_expected;
    cluster += static_cast<double>(r.cluster_size) / static_cast<double>(vertex_count);
  }
  const auto n = static_cast<double>(runs.size());
  row.blocked_fraction /= n;
  row.mean_blocked_edge_fraction /= n;
  row.weak_fraction /= n;
  row.strong_fraction /= n;
  row.undecided_fraction /= n;
  if (have_dev) row.mean_max_deviation_from_expected = dev / n;
  row.mean_cluster_fraction = cluster / n;
  row.runs = std::move(runs);
  return row;
}

// First theta whose blocked fraction drops below 1/2, linearly interpolated
// against the previous grid point.
inline double transition_crossing(const std::vector<SweepRow>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].blocked_fraction >= 0.5) continue;
    if (i == 0) return rows[0].theta;
    const double f0 = rows[i - 1].blocked_fraction;
    const double f1 = rows[i].blocked_fraction;
    return rows[i - 1].theta + (f0 - 0.5) / (f0 - f1) * (rows[i].theta - rows[i - 1].theta);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// R replicas at every theta of the configuration (sorted ascending). Replica
/// inputs are regenerated per theta from the same streams.
inline SweepResult theta_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const LatticeGraph g = build_lattice(cfg.lattice);
  std::vector<double> thetas = cfg.thetas;
  std::sort(thetas.begin(), thetas.end());
  SweepResult out;
  for (double theta : thetas) {
    auto runs = run_replicas(cfg.replicas, cfg.jobs, [&](std::uint64_t r) {
      const ReplicaInputs in = make_replica_inputs(cfg, g, r);
      return run_replica(cfg, g, in, theta, r);
    });
    out.rows.push_back(aggregate(theta, std::move(runs), g.vertex_count()));
  }
  out.crossing = transition_crossing(out.rows);
  return out;
}

struct ZeroOneEntry {
  double theta = 0;
  double blocked_fraction = 0;
  bool transition_zone = false;  // fraction in [0.2, 0.8]
};

inline std::vector<ZeroOneEntry> zero_one_check(const SweepResult& sweep) {
  std::vector<ZeroOneEntry> out;
  for (auto& row : sweep.rows) {
    if (row.replicas < 100) throw std::invalid_argument("zero_one_check needs at least 100 replicas per theta");
    out.push_back({row.theta, row.blocked_fraction, row.blocked_fraction >= 0.2 && row.blocked_fraction <= 0.8});
  }
  return out;
}

/// theta sweep restricted to the largest open cluster of a fresh percolation
/// sample per replica.
inline SweepResult percolation_experiment(const ExperimentConfig& cfg) {
  if (!cfg.percolation) throw std::invalid_argument("percolation experiment needs p");
  if (cfg.lattice.dimension() < 2) throw std::invalid_argument("percolation experiment needs d >= 2");
  SweepResult out = theta_sweep(cfg);
  const double volume = static_cast<double>(cfg.lattice.volume());
  for (auto& row : out.rows)
    for (auto& r : row.runs)
      if (static_cast<double>(r.cluster_size) < 0.1 * volume) {
        out.warnings.push_back("replica " + std::to_string(r.replica) +
                               ": largest cluster below 10% of the volume (p may be subcritical)");
      }
  std::sort(out.warnings.begin(), out.warnings.end());
  out.warnings.erase(std::unique(out.warnings.begin(), out.warnings.end()), out.warnings.end());
  return out;
}

struct BlockReplica {
  std::uint64_t replica = 0;
  std::size_t boundary_edges = 0;  // edges joining blocks of different type
  std::uint64_t boundary_accepts = 0;
  std::uint64_t confinement_violations = 0;
  std::uint64_t checks = 0;
  double worst_low = 0;   // largest value seen at a 0-type boundary site
  double worst_high = 1;  // smallest value seen at a 1-type boundary site
  std::uint64_t events = 0;
};

struct BlockReport {
  double theta = 0;
  std::vector<BlockReplica> replicas;

  [[nodiscard]] bool passed() const {
    for (auto& r : replicas)
      if (r.boundary_accepts || r.confinement_violations) return false;
    return true;
  }
};

struct BlockBoundary {
  EdgeId edge;
  VertexId low_site;   // site of the 0-type block
  VertexId high_site;  // site of the 1-type block
};

inline std::vector<BlockBoundary> mixed_block_boundaries(const LatticeGraph& ring, const BlockField& b) {
  std::vector<BlockBoundary> out;
  for (std::size_t k = 0; k < b.block_count(); ++k) {
    const std::size_t k1 = (k + 1) % b.block_count();
    if (b.type[k] == b.type[k1]) continue;
    auto [left, right] = b.boundary_sites(k);
    const auto lo = static_cast<VertexId>(b.type[k] == 0 ? left : right);
    const auto hi = static_cast<VertexId>(b.type[k] == 0 ? right : left);
    const auto id = find_edge(ring, static_cast<VertexId>(left), static_cast<VertexId>(right));
    out.push_back({*id, lo, hi});
  }
  return out;
}

/// Runs the block field under theta < 4/5 and checks that no edge between
/// blocks of different type ever accepts an event, and that the two sites of
/// every such edge keep values in [0, 0.1] (0-type side) and [0.9, 1] (1-type
/// side) after every event that touches them.
inline BlockReport block_experiment(const ExperimentConfig& cfg) {
  if (!cfg.blocks) throw std::invalid_argument("block experiment needs a block field");
  if (cfg.thetas.size() != 1) throw std::invalid_argument("block experiment takes a single theta");
  const double theta = cfg.thetas.front();
  if (!(theta < 0.8)) throw std::invalid_argument("block experiment only covers theta < 4/5");
  cfg.validate();
  const LatticeGraph g = build_lattice(cfg.lattice);
  BlockReport rep;
  rep.theta = theta;
  rep.replicas = run_replicas(cfg.replicas, cfg.jobs, [&](std::uint64_t replica) {
    const BlockField b = sample_blocks(g, cfg.seed, replica);
    const auto bounds = mixed_block_boundaries(g, b);
    BlockReplica out;
    out.replica = replica;
    out.boundary_edges = bounds.size();
    std::vector<std::int8_t> watch(g.vertex_count(), -1);  // 0 or 1: kind of a watched site
    std::vector<bool> boundary_edge(g.edge_count(), false);
    for (auto& bb : bounds) {
      watch[bb.low_site] = 0;
      watch[bb.high_site] = 1;
      boundary_edge[bb.edge] = true;
    }
    Simulation sim(g, b.field.values, ModelParams{cfg.mu, theta}, cfg.seed, replica, {}, false);
    auto observe = [&](const Event& ev, const Simulation& s) {
      if (!ev.accepted) return;
      if (boundary_edge[ev.edge]) ++out.boundary_accepts;
      const Edge& uv = g.edge(ev.edge);
      for (VertexId x : {uv.u, uv.v}) {
        if (watch[x] < 0) continue;
        const double val = s.values()[x];
        ++out.checks;
        if (watch[x] == 0) {
          out.worst_low = std::max(out.worst_low, val);
          if (!(val >= 0.0 && val <= 0.1)) ++out.confinement_violations;
        } else {
          out.worst_high = std::min(out.worst_high, val);
          if (!(val >= 0.9 && val <= 1.0)) ++out.confinement_violations;
        }
      }
    };
    if (cfg.events)
      sim.run_events(cfg.events, observe);
    else
      sim.run_until(cfg.horizon, observe);
    out.events = sim.event_count();
    return out;
  });
  return rep;
}

struct UnboundedRow {
  double theta = 0;
  double blocked_fraction = 0;            // replicas with blocked edges
  double mean_blocked_edge_fraction = 0;  // blocked edges / edges, averaged
  double initial_gap_fraction = 0;        // edges whose initial gap exceeds theta, averaged
};

struct UnboundedReport {
  std::vector<UnboundedRow> rows;
  SweepResult sweep;
};

inline UnboundedReport unbounded_experiment(const ExperimentConfig& cfg) {
  UnboundedReport rep;
  rep.sweep = theta_sweep(cfg);
  const LatticeGraph g = build_lattice(cfg.lattice);
  for (auto& row : rep.sweep.rows) {
    UnboundedRow u{row.theta, row.blocked_fraction, row.mean_blocked_edge_fraction, 0.0};
    for (auto& r : row.runs) {
      const auto init = make_replica_inputs(cfg, g, r.replica).initial;
      std::size_t wide = 0;
      for (const Edge& e : g.edges()) wide += std::abs(init[e.u] - init[e.v]) > row.theta;
      u.initial_gap_fraction += static_cast<double>(wide) / static_cast<double>(g.edge_count());
    }
    u.initial_gap_fraction /= static_cast<double>(row.runs.size());
    rep.rows.push_back(u);
  }
  return rep;
}

struct StabilizationReport {
  double theta = 0;
  VertexId probe = 0;
  double first_checkpoint = 0;   // T
  double second_checkpoint = 0;  // 2T
  double ks_distance = 0;
  double tolerance = 0.05;
  bool below_tolerance = false;
  std::vector<double> first_values;
  std::vector<double> second_values;
};

// Empirical laws of eta_T(probe) and eta_2T(probe) across replicas and their
// two-sample Kolmogorov-Smirnov distance.
inline StabilizationReport distributional_stabilization(const ExperimentConfig& cfg, VertexId probe = 0) {
  cfg.validate();
  if (cfg.replicas < 100) throw std::invalid_argument("distributional stabilization needs at least 100 replicas");
  const LatticeGraph g = build_lattice(cfg.lattice);
  if (probe >= g.vertex_count()) throw std::invalid_argument("probe vertex out of range");
  StabilizationReport rep;
  rep.theta = cfg.thetas.front();
  rep.probe = probe;
  rep.first_checkpoint = cfg.horizon;
  rep.second_checkpoint = 2 * cfg.horizon;
  rep.tolerance = cfg.ks_tolerance;
  auto pairs = run_replicas(cfg.replicas, cfg.jobs, [&](std::uint64_t r) {
    const ReplicaInputs in = make_replica_inputs(cfg, g, r);
    Simulation sim(g, in.initial, ModelParams{cfg.mu, rep.theta}, cfg.seed, r, in.active, false);
    sim.run_until(cfg.horizon);
    const double a = sim.values()[probe];
    sim.run_until(2 * cfg.horizon);
    return std::pair{a, sim.values()[probe]};
  });
  for (auto& [a, b] : pairs) {
    rep.first_values.push_back(a);
    rep.second_values.push_back(b);
  }
  rep.ks_distance = stats::ks_two_sample(rep.first_values, rep.second_values).distance;
  rep.below_tolerance = rep.ks_distance < rep.tolerance;
  return rep;
}

}  // namespace deffuant

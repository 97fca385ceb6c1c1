#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "deffuant/energy.hpp"
#include "deffuant/engine.hpp"
#include "deffuant/experiments.hpp"

// CSV writers. Every file starts with one comment line
//
//   # schema=<id> config_hash=<16 hex digits> seed=<n> [key=value ...]
//
// followed by a column header. Readers must reject unknown schema ids.
namespace deffuant::csv {

inline constexpr std::string_view kRunSchema = "deffuant.runs.v1";
inline constexpr std::string_view kSweepSchema = "deffuant.sweep.v1";
inline constexpr std::string_view kTrajectorySchema = "deffuant.trajectory.v1";
inline constexpr std::string_view kBoundsSchema = "deffuant.bounds.v1";
inline constexpr std::string_view kAuditSchema = "deffuant.audit.v1";
inline constexpr std::string_view kBlocksSchema = "deffuant.blocks.v1";
inline constexpr std::string_view kSadSchema = "deffuant.sad.v1";

struct Header {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string extra;  // additional key=value pairs
};

inline std::string num(double x) { return detail::format_double(x); }

inline void header(std::ostream& os, std::string_view schema, const Header& h) {
  os << "# schema=" << schema << " config_hash=" << h.config_hash << " seed=" << h.seed;
  if (!h.extra.empty()) os << ' ' << h.extra;
  os << '\n';
}

inline void write_runs(std::ostream& os, const Header& h, const std::vector<RunResult>& runs) {
  header(os, kRunSchema, h);
  os << "replica,theta,horizon,events,accepted,active_edges,active_vertices,blocked_edges,max_blocked_degree,"
        "max_gap,initial_average,expected_mean,max_deviation_from_average,max_deviation_from_expected,outcome,"
        "cluster_size,cluster_spanning\n";
  for (auto& r : runs) {
    os << r.replica << ',' << num(r.theta) << ',' << num(r.horizon) << ',' << r.events << ',' << r.accepted << ','
       << r.active_edges << ',' << r.active_vertices << ',' << r.blocked_edges << ',' << r.max_blocked_degree << ','
       << num(r.max_gap) << ',' << num(r.initial_average) << ',' << num(r.expected_mean) << ','
       << num(r.max_deviation_from_average) << ',' << num(r.max_deviation_from_expected) << ',' << to_string(r.outcome)
       << ',' << r.cluster_size << ',' << (r.cluster_spanning ? 1 : 0) << '\n';
  }
}

inline void write_sweep(std::ostream& os, Header h, const SweepResult& s) {
  h.extra = "crossing=" + num(s.crossing) + (h.extra.empty() ? "" : " " + h.extra);
  header(os, kSweepSchema, h);
  os << "theta,replicas,blocked_fraction,mean_blocked_edge_fraction,weak_fraction,strong_fraction,undecided_fraction,"
        "mean_max_deviation_from_expected,mean_cluster_fraction\n";
  for (auto& r : s.rows) {
    os << num(r.theta) << ',' << r.replicas << ',' << num(r.blocked_fraction) << ','
       << num(r.mean_blocked_edge_fraction) << ',' << num(r.weak_fraction) << ',' << num(r.strong_fraction) << ','
       << num(r.undecided_fraction) << ',' << num(r.mean_max_deviation_from_expected) << ','
       << num(r.mean_cluster_fraction) << '\n';
  }
}

inline void write_trajectories(std::ostream& os, const Header& h, const SweepResult& s) {
  header(os, kTrajectorySchema, h);
  os << "replica,theta,time,variance\n";
  for (auto& row : s.rows)
    for (auto& r : row.runs)
      for (auto& [t, v] : r.variance_trajectory)
        os << r.replica << ',' << num(r.theta) << ',' << num(t) << ',' << num(v) << '\n';
}

struct BoundsRow {
  std::string spec;
  double theta_c = 0;
  bool always_subcritical = false;
  double bound_abs = 0;
  double bound_opt = 0;
  double bend = 0;
  double weight = 0;
};

inline void write_bounds(std::ostream& os, const Header& h, const std::vector<BoundsRow>& rows) {
  header(os, kBoundsSchema, h);
  os << "spec,theta_c,always_subcritical,bound_abs,bound_opt,witness_bend,witness_weight\n";
  for (auto& r : rows)
    os << '"' << r.spec << "\"," << num(r.theta_c) << ',' << (r.always_subcritical ? 1 : 0) << ',' << num(r.bound_abs)
       << ',' << num(r.bound_opt) << ',' << num(r.bend) << ',' << num(r.weight) << '\n';
}

inline void write_audits(std::ostream& os, const Header& h, const std::vector<AuditReport>& audits) {
  header(os, kAuditSchema, h);
  os << "energy,events,accepted,min_loss,max_pair_residual,max_mass_drift,max_global_drift,initial_total,final_total,"
        "ok,first_violation,violation\n";
  for (auto& a : audits) {
    os << a.energy << ',' << a.events << ',' << a.accepted << ',' << num(a.min_loss) << ',' << num(a.max_pair_residual)
       << ',' << num(a.max_mass_drift) << ',' << num(a.max_global_drift) << ',' << num(a.initial_total) << ','
       << num(a.final_total) << ',' << (a.ok() ? 1 : 0) << ',';
    if (a.first_violation) os << *a.first_violation;
    os << ',' << a.violation << '\n';
  }
}

inline void write_blocks(std::ostream& os, const Header& h, const BlockReport& rep) {
  header(os, kBlocksSchema, h);
  os << "replica,theta,boundary_edges,boundary_accepts,confinement_violations,checks,worst_low,worst_high,events\n";
  for (auto& r : rep.replicas)
    os << r.replica << ',' << num(rep.theta) << ',' << r.boundary_edges << ',' << r.boundary_accepts << ','
       << r.confinement_violations << ',' << r.checks << ',' << num(r.worst_low) << ',' << num(r.worst_high) << ','
       << r.events << '\n';
}

struct SadQuery {
  VertexId vertex = 0;
  double time = 0;
  double reconstructed = 0;
  double simulated = 0;
  double weight_sum = 0;
  std::size_t support = 0;
};

inline void write_sad(std::ostream& os, const Header& h, const std::vector<SadQuery>& qs) {
  header(os, kSadSchema, h);
  os << "query,vertex,time,reconstructed,simulated,abs_error,weight_sum,support\n";
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto& q = qs[i];
    os << i << ',' << q.vertex << ',' << num(q.time) << ',' << num(q.reconstructed) << ',' << num(q.simulated) << ','
       << num(std::abs(q.reconstructed - q.simulated)) << ',' << num(q.weight_sum) << ',' << q.support << '\n';
  }
}

}  // namespace deffuant::csv

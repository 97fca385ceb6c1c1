// Command-line front end. Exit codes: 0 ok, 1 unexpected error, 2 bad config
// or arguments, 3 invariant violation.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deffuant/deffuant.hpp"

namespace fs = std::filesystem;
using namespace deffuant;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicas;
  std::optional<unsigned> jobs;
  std::string out_dir = ".";
  std::vector<double> thetas;
  std::optional<double> p;
  std::optional<double> horizon;
  bool catalog = false;
};

void add_common(CLI::App* cmd, Options& o, bool config_required = true) {
  auto* c = cmd->add_option("-c,--config", o.config, "experiment config file");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "master seed override");
  cmd->add_option("--replicas", o.replicas, "replica count override");
  cmd->add_option("--jobs", o.jobs, "worker threads (output does not depend on it)");
  cmd->add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--theta", o.thetas, "theta list override")->delimiter(',');
  cmd->add_option("--p", o.p, "percolation probability override");
  cmd->add_option("--horizon", o.horizon, "horizon override");
}

ConfigFile load(const Options& o) {
  std::ifstream in(o.config, std::ios::binary);
  if (!in) throw UsageError("cannot open config '" + o.config + "'");
  std::stringstream text;
  text << in.rdbuf();
  ConfigFile cf = parse_config(text.str(), o.config);
  ExperimentConfig& ec = cf.experiment;
  if (o.seed) ec.seed = *o.seed;
  if (o.replicas) ec.replicas = *o.replicas;
  if (o.jobs) ec.jobs = *o.jobs;
  if (!o.thetas.empty()) ec.thetas = o.thetas;
  if (o.p) ec.percolation = *o.p;
  if (o.horizon) ec.horizon = *o.horizon;
  try {
    ec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("after overrides: ") + e.what());
  }
  return cf;
}

csv::Header header_for(const ConfigFile& cf, std::string extra = {}) {
  return {hex64(config_hash(cf)), cf.experiment.seed, std::move(extra)};
}

fs::path out_file(const Options& o, const std::string& name) {
  fs::create_directories(o.out_dir);
  return fs::path(o.out_dir) / name;
}

template <class Write>
fs::path write_file(const Options& o, const std::string& name, Write&& write) {
  const fs::path path = out_file(o, name);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write(os);
  os.close();
  if (!os) throw std::runtime_error("error while writing " + path.string());
  return path;
}

std::string quiet_note(const ExperimentConfig& ec) {
  return "finally_blocked=gap>theta_and_no_accept_after_q*T q=" + csv::num(ec.classify.quiet_fraction) +
         " delta=" + csv::num(ec.classify.delta);
}

int cmd_simulate(const Options& o) {
  const ConfigFile cf = load(o);
  const ExperimentConfig& ec = cf.experiment;
  const LatticeGraph g = build_lattice(ec.lattice);
  const ReplicaInputs in = make_replica_inputs(ec, g, 0);
  const double theta = ec.thetas.front();
  Simulation sim(g, in.initial, ModelParams{ec.mu, theta}, ec.seed, 0, in.active, true);
  if (ec.events)
    sim.run_events(ec.events);
  else
    sim.run_until(ec.horizon);
  RunResult r = classify_outcome(sim, in.initial, ec.classify);
  attach_expected_mean(r, sim, expected_mean_of(ec));
  if (in.clusters) {
    r.cluster_id = in.clusters->largest;
    r.cluster_size = in.clusters->largest_size();
    r.cluster_spanning = in.clusters->spanning;
  }
  const auto h = header_for(cf, quiet_note(ec));
  write_file(o, "initial.csv", [&](std::ostream& os) { write_field_csv(os, in.initial); });
  write_file(o, "trace.csv", [&](std::ostream& os) {
    write_trace_csv(os, sim.log(), "config_hash=" + h.config_hash + " seed=" + std::to_string(ec.seed));
  });
  write_file(o, "runs.csv", [&](std::ostream& os) { csv::write_runs(os, h, {r}); });

  // conservation check on the recorded run
  const auto d = describe(ec.blocks ? DistributionSpec::uniform(0, 1) : *ec.distribution);
  const double lo = d.bounded ? d.a : *std::min_element(in.initial.begin(), in.initial.end());
  const double hi = d.bounded ? d.b : *std::max_element(in.initial.begin(), in.initial.end());
  AuditOptions opt;
  opt.mass_tolerance = std::max(opt.mass_tolerance, static_cast<double>(g.vertex_count()) *
                                                        std::numeric_limits<double>::epsilon() * (hi - lo));
  const AuditReport audit = audit_run(g, in.initial, ec.mu, sim.log(), EnergyFunction::quadratic(lo, hi), opt);
  std::cout << "events " << r.events << " accepted " << r.accepted << " outcome " << to_string(r.outcome)
            << " blocked_edges " << r.blocked_edges << " max_gap " << csv::num(r.max_gap) << '\n';
  if (!audit.ok()) {
    const auto path = write_file(o, "audit.csv", [&](std::ostream& os) { csv::write_audits(os, h, {audit}); });
    std::cerr << "invariant violation: " << audit.violation << "\naudit report: " << path.string() << '\n';
    return kExitInvariant;
  }
  return 0;
}

void write_sweep_outputs(const Options& o, const ConfigFile& cf, const SweepResult& s) {
  const auto h = header_for(cf, quiet_note(cf.experiment));
  std::vector<RunResult> all;
  for (auto& row : s.rows) all.insert(all.end(), row.runs.begin(), row.runs.end());
  write_file(o, "sweep.csv", [&](std::ostream& os) { csv::write_sweep(os, h, s); });
  write_file(o, "runs.csv", [&](std::ostream& os) { csv::write_runs(os, h, all); });
  write_file(o, "trajectories.csv", [&](std::ostream& os) { csv::write_trajectories(os, h, s); });
  std::cout << "theta,blocked_fraction,weak_fraction,strong_fraction\n";
  for (auto& row : s.rows)
    std::cout << csv::num(row.theta) << ',' << csv::num(row.blocked_fraction) << ',' << csv::num(row.weak_fraction)
              << ',' << csv::num(row.strong_fraction) << '\n';
  std::cout << "crossing " << csv::num(s.crossing) << '\n';
  if (s.rows.front().replicas >= 100)
    for (auto& z : zero_one_check(s))
      if (z.transition_zone) std::cout << "transition zone at theta " << csv::num(z.theta) << '\n';
}

int cmd_sweep(const Options& o) {
  const ConfigFile cf = load(o);
  const SweepResult s = theta_sweep(cf.experiment);
  if (cf.experiment.distribution) {
    const auto tc = theoretical_theta_c(*cf.experiment.distribution);
    std::cout << "theoretical theta_c " << (tc.always_subcritical ? "inf (always subcritical)" : csv::num(tc.value))
              << '\n';
  }
  write_sweep_outputs(o, cf, s);
  return 0;
}

int cmd_percolate(const Options& o) {
  const ConfigFile cf = load(o);
  const ExperimentConfig& ec = cf.experiment;
  if (!ec.percolation) throw UsageError("percolate needs 'percolation' in [experiment] or --p");
  if (ec.lattice.dimension() < 2) throw UsageError("percolate needs a lattice of dimension >= 2");
  const SweepResult s = percolation_experiment(ec);
  for (auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
  const LatticeGraph g = build_lattice(ec.lattice);
  const auto sample = percolate(g, *ec.percolation, percolation_seed(ec.seed, 0));
  write_file(o, "percolation_replica0.txt", [&](std::ostream& os) { write_percolation(os, ec.lattice, sample); });
  write_sweep_outputs(o, cf, s);
  return 0;
}

int cmd_blocks(const Options& o) {
  const ConfigFile cf = load(o);
  if (!cf.experiment.blocks) throw UsageError("blocks needs 'kind = blocks' in [distribution]");
  if (cf.experiment.thetas.size() != 1 || !(cf.experiment.thetas.front() < 0.8))
    throw UsageError("blocks needs a single theta below 0.8");
  const BlockReport rep = block_experiment(cf.experiment);
  const auto path =
      write_file(o, "blocks.csv", [&](std::ostream& os) { csv::write_blocks(os, header_for(cf), rep); });
  std::uint64_t accepts = 0;
  std::uint64_t violations = 0;
  for (auto& r : rep.replicas) {
    accepts += r.boundary_accepts;
    violations += r.confinement_violations;
  }
  std::cout << "replicas " << rep.replicas.size() << " boundary_accepts " << accepts << " confinement_violations "
            << violations << '\n';
  if (!rep.passed()) {
    std::cerr << "invariant violation: block boundaries were crossed\naudit report: " << path.string() << '\n';
    return kExitInvariant;
  }
  return 0;
}

int cmd_sad_verify(const Options& o) {
  const ConfigFile cf = load(o);
  const ExperimentConfig& ec = cf.experiment;
  if (ec.lattice.dimension() != 1 || ec.lattice.boundary != Boundary::periodic)
    throw UsageError("sad-verify needs a ring lattice");
  const LatticeGraph g = build_lattice(ec.lattice);
  const ReplicaInputs in = make_replica_inputs(ec, g, 0);
  Simulation sim(g, in.initial, ModelParams{ec.mu, ec.thetas.front()}, ec.seed, 0, in.active, true);
  if (ec.events)
    sim.run_events(ec.events);
  else
    sim.run_until(ec.horizon);
  const EventLog& log = sim.log();
  CounterRng rng(ec.seed, 0, Purpose::queries);
  std::vector<csv::SadQuery> qs;
  double worst = 0;
  double worst_sum = 0;
  for (std::size_t i = 0; i < cf.sad_queries; ++i) {
    csv::SadQuery q;
    q.vertex = static_cast<VertexId>(rng.index(g.vertex_count()));
    q.time = rng.uniform(0.0, log.horizon);
    const SadProfile p = backward_profile(g, log, ec.mu, q.vertex, q.time);
    q.reconstructed = p.apply(in.initial);
    q.simulated = state_at(g, in.initial, ec.mu, log, q.time)[q.vertex];
    q.weight_sum = p.total();
    q.support = p.weights.size();
    worst = std::max(worst, std::abs(q.reconstructed - q.simulated));
    worst_sum = std::max(worst_sum, std::abs(q.weight_sum - 1.0));
    qs.push_back(q);
  }
  const auto path = write_file(o, "sad.csv", [&](std::ostream& os) { csv::write_sad(os, header_for(cf), qs); });
  std::cout << "queries " << qs.size() << " max reconstruction error " << csv::num(worst) << " max |weight sum - 1| "
            << csv::num(worst_sum) << '\n';
  if (worst > 1e-10 || worst_sum > 1e-12) {
    std::cerr << "invariant violation: reconstruction error above tolerance\naudit report: " << path.string() << '\n';
    return kExitInvariant;
  }
  return 0;
}

int cmd_energy_audit(const Options& o) {
  const ConfigFile cf = load(o);
  const ExperimentConfig& ec = cf.experiment;
  const auto d = describe(ec.blocks ? DistributionSpec::uniform(0, 1) : *ec.distribution);
  if (!d.bounded) throw UsageError("energy-audit needs a bounded initial law");
  const LatticeGraph g = build_lattice(ec.lattice);
  const ReplicaInputs in = make_replica_inputs(ec, g, 0);
  Simulation sim(g, in.initial, ModelParams{ec.mu, ec.thetas.front()}, ec.seed, 0, in.active, true);
  if (ec.events)
    sim.run_events(ec.events);
  else
    sim.run_until(ec.horizon);
  std::vector<EnergyFunction> energies;
  for (auto& name : cf.energies) {
    if (name == "quadratic") energies.push_back(EnergyFunction::quadratic(d.a, d.b));
    if (name == "absolute") energies.push_back(EnergyFunction::absolute(0.5 * (d.a + d.b), d.a, d.b));
    if (name == "exponential") energies.push_back(EnergyFunction::exponential(d.a, d.b));
  }
  std::vector<AuditReport> audits;
  for (auto& e : energies) audits.push_back(audit_run(g, in.initial, ec.mu, sim.log(), e));
  const auto path =
      write_file(o, "audit.csv", [&](std::ostream& os) { csv::write_audits(os, header_for(cf), audits); });
  const ConvexOrderReport convex = convex_order_monitor(g, in.initial, ec.mu, sim.log(), energies);
  bool ok = convex.violations() == 0;
  for (auto& a : audits) {
    std::cout << a.energy << ": events " << a.events << " min_loss " << csv::num(a.min_loss) << " global_drift "
              << csv::num(a.max_global_drift) << " mass_drift " << csv::num(a.max_mass_drift) << (a.ok() ? " ok" : " FAILED")
              << '\n';
    ok = ok && a.ok();
  }
  for (auto& e : convex.entries)
    std::cout << "convex order " << e.function << ": accepted " << e.accepted << " violations " << e.violations
              << " max_increase " << csv::num(e.max_increase) << '\n';
  if (!ok) {
    std::cerr << "invariant violation in the energy audit\naudit report: " << path.string() << '\n';
    return kExitInvariant;
  }
  return 0;
}

std::vector<std::pair<std::string, DistributionSpec>> catalog() {
  return {
      {"uniform(0,1)", DistributionSpec::uniform(0, 1)},
      {"beta(2,1)", DistributionSpec::beta(2, 1)},
      {"beta(1,3)", DistributionSpec::beta(1, 3)},
      {"discrete{-0.8,-0.3,0.7,0.8}", DistributionSpec::uniform_atoms({-0.8, -0.3, 0.7, 0.8})},
      {"union[0,1/8]u[7/8,1]", DistributionSpec::union_uniform({{0, 0.125}, {0.875, 1}})},
      {"uniform{0,1/2,1}", DistributionSpec::uniform_atoms({0, 0.5, 1})},
      {"{0:1/3,2/3:1/2,1:1/6}", DistributionSpec::discrete({0, 2.0 / 3, 1}, {1.0 / 3, 0.5, 1.0 / 6})},
      {"{0:9/20,1/2:1/10,1:9/20}", DistributionSpec::discrete({0, 0.5, 1}, {0.45, 0.1, 0.45})},
      {"centered_pareto(3)", centered_pareto(3)},
  };
}

csv::BoundsRow bounds_row(const std::string& name, const DistributionSpec& spec) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  csv::BoundsRow row{name, nan, false, nan, nan, nan, nan};
  const auto tc = theoretical_theta_c(spec);
  row.theta_c = tc.value;
  row.always_subcritical = tc.always_subcritical;
  const auto d = describe(spec);
  if (d.bounded && d.a >= -1e-12 && d.b <= 1 + 1e-12 && d.a < d.b) {
    row.bound_abs = consensus_bound_abs(spec);
    const OptimalBound opt = consensus_bound_optimal(spec);
    row.bound_opt = opt.theta;
    row.bend = opt.bend;
    row.weight = opt.weight;
  }
  return row;
}

int cmd_bounds(const Options& o) {
  std::vector<csv::BoundsRow> rows;
  csv::Header h{hex64(fnv1a("catalog")), 0, ""};
  if (!o.config.empty()) {
    const ConfigFile cf = load(o);
    h = header_for(cf);
    if (cf.experiment.distribution)
      rows.push_back(bounds_row(to_string(*cf.experiment.distribution), *cf.experiment.distribution));
    else
      std::cerr << "note: block fields have no i.i.d. law; only the catalog is tabulated\n";
  } else if (!o.catalog) {
    throw UsageError("bounds needs --config or --catalog");
  }
  if (o.catalog)
    for (auto& [name, spec] : catalog()) rows.push_back(bounds_row(name, spec));
  write_file(o, "bounds.csv", [&](std::ostream& os) { csv::write_bounds(os, h, rows); });
  std::cout << "spec,theta_c,bound_abs,bound_opt\n";
  for (auto& r : rows)
    std::cout << r.spec << ',' << (r.always_subcritical ? "inf" : csv::num(r.theta_c)) << ',' << csv::num(r.bound_abs)
              << ',' << csv::num(r.bound_opt) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deffuant bounded-confidence model on lattices"};
  app.require_subcommand(1);
  Options o;
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Sub subs[] = {
      {"simulate", "one replica with its event trace", cmd_simulate},
      {"sweep", "replicated theta sweep", cmd_sweep},
      {"percolate", "theta sweep on the largest percolation cluster", cmd_percolate},
      {"blocks", "block-field confinement experiment", cmd_blocks},
      {"sad-verify", "backward profile reconstruction check", cmd_sad_verify},
      {"energy-audit", "energy and mass bookkeeping over a recorded run", cmd_energy_audit},
      {"bounds", "critical thresholds and energy bounds", cmd_bounds},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> cmds;
  for (auto& s : subs) {
    const bool is_bounds = std::string(s.name) == "bounds";
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, o, !is_bounds);
    if (is_bounds) cmd->add_flag("--catalog", o.catalog, "tabulate the built-in catalog of laws");
    cmds.emplace_back(cmd, s.run);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  try {
    for (auto& [cmd, run] : cmds)
      if (cmd->parsed()) return run(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

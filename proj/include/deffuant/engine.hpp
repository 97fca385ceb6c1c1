#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deffuant/lattice.hpp"
#include "deffuant/rng.hpp"

namespace deffuant {

struct ModelParams {
  double mu = 0.5;
  double theta = 0.5;

  void validate() const {
    if (!(mu > 0.0 && mu <= 0.5)) throw std::invalid_argument("mu must lie in (0, 1/2]");
    if (!(theta >= 0.0) || std::isnan(theta)) throw std::invalid_argument("theta must be nonnegative");
  }
};

struct UpdateResult {
  double a;
  double b;
  bool accepted;
};

// One pairwise compromise. Both endpoints move by the same delta with opposite
// signs, so a + b is preserved up to the rounding of the two additions.
inline UpdateResult apply_update(double a, double b, const ModelParams& p) noexcept {
  if (!(std::abs(a - b) <= p.theta)) return {a, b, false};
  const double delta = p.mu * (b - a);
  return {a + delta, b - delta, true};
}

struct Event {
  double time;
  EdgeId edge;
  bool accepted;
  double pre_u;  // value at edge(e).u just before the event
  double pre_v;

  bool operator==(const Event&) const = default;
};

struct EventLog {
  std::vector<Event> events;
  double horizon = 0.0;  // events are complete on [0, horizon]

  [[nodiscard]] std::size_t size() const { return events.size(); }
  [[nodiscard]] std::size_t accepted_count() const {
    std::size_t n = 0;
    for (auto& e : events) n += e.accepted;
    return n;
  }
  bool operator==(const EventLog&) const = default;
};

inline std::vector<EdgeId> all_edges(const LatticeGraph& g) {
  std::vector<EdgeId> ids(g.edge_count());
  std::iota(ids.begin(), ids.end(), EdgeId{0});
  return ids;
}

/// Kinetic Monte Carlo driver for the pairwise dynamics.
///
/// Every active edge carries an independent unit-rate Poisson clock. The merged
/// process is realized by drawing Exp(m) holding times, m = number of active
/// edges, and choosing the firing edge uniformly. The next event time is drawn
/// ahead of time, so consecutive run_until calls produce the same trajectory as
/// a single call with the final horizon.
class Simulation {
 public:
  Simulation(const LatticeGraph& graph, std::vector<double> initial, ModelParams params, std::uint64_t seed,
             std::uint64_t stream = 0, std::vector<EdgeId> active = {}, bool record_log = true)
      : graph_(&graph),
        params_(params),
        values_(std::move(initial)),
        active_(std::move(active)),
        rng_(seed, stream, Purpose::dynamics),
        record_(record_log) {
    params_.validate();
    if (values_.size() != graph.vertex_count()) throw std::invalid_argument("initial field size mismatch");
    if (active_.empty()) active_ = all_edges(graph);
    for (EdgeId e : active_)
      if (e >= graph.edge_count()) throw std::invalid_argument("active edge out of range");
    rate_ = static_cast<double>(active_.size());
    last_accept_.assign(graph.edge_count(), -std::numeric_limits<double>::infinity());
    ends_.reserve(active_.size());
    for (EdgeId e : active_) ends_.push_back(graph.edge(e));
    next_time_ = rng_.exponential(rate_);
  }

  [[nodiscard]] const LatticeGraph& graph() const { return *graph_; }
  [[nodiscard]] const ModelParams& params() const { return params_; }
  [[nodiscard]] double time() const { return time_; }
  [[nodiscard]] double next_event_time() const { return next_time_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  [[nodiscard]] const std::vector<EdgeId>& active_edges() const { return active_; }
  [[nodiscard]] const EventLog& log() const { return log_; }
  [[nodiscard]] EventLog take_log() { return std::move(log_); }
  [[nodiscard]] std::uint64_t event_count() const { return events_; }
  [[nodiscard]] std::uint64_t accepted_count() const { return accepted_; }
  // -inf for edges that have never accepted an event.
  [[nodiscard]] double last_accept_time(EdgeId e) const { return last_accept_[e]; }
  [[nodiscard]] const std::vector<double>& last_accept_times() const { return last_accept_; }

  // Processes exactly one event and returns it.
  template <class Observer>
  Event step(Observer&& observe) {
    time_ = next_time_;
    const auto k = static_cast<std::size_t>(rng_.index(active_.size()));
    const Edge& uv = ends_[k];
    double& a = values_[uv.u];
    double& b = values_[uv.v];
    const Event ev{time_, active_[k], false, a, b};
    const UpdateResult r = apply_update(a, b, params_);
    Event out = ev;
    if (r.accepted) {
      a = r.a;
      b = r.b;
      out.accepted = true;
      last_accept_[out.edge] = time_;
      ++accepted_;
    }
    ++events_;
    if (record_) log_.events.push_back(out);
    next_time_ = time_ + rng_.exponential(rate_);
    observe(out, static_cast<const Simulation&>(*this));
    return out;
  }

  Event step() {
    return step([](const Event&, const Simulation&) {});
  }

  // Processes every event with time <= horizon; afterwards time() == horizon.
  template <class Observer>
  void run_until(double horizon, Observer&& observe) {
    if (horizon < time_) throw std::invalid_argument("horizon before current time");
    while (next_time_ <= horizon) step(observe);
    time_ = horizon;
    log_.horizon = horizon;
  }

  void run_until(double horizon) {
    run_until(horizon, [](const Event&, const Simulation&) {});
  }

  // Processes `n` further events; time() is the time of the last one.
  template <class Observer>
  void run_events(std::uint64_t n, Observer&& observe) {
    for (std::uint64_t i = 0; i < n; ++i) step(observe);
    log_.horizon = time_;
  }

  void run_events(std::uint64_t n) {
    run_events(n, [](const Event&, const Simulation&) {});
  }

 private:
  const LatticeGraph* graph_;
  ModelParams params_;
  std::vector<double> values_;
  std::vector<EdgeId> active_;
  std::vector<Edge> ends_;
  std::vector<double> last_accept_;
  CounterRng rng_;
  double rate_ = 0;
  double time_ = 0;
  double next_time_ = 0;
  std::uint64_t events_ = 0;
  std::uint64_t accepted_ = 0;
  bool record_;
  EventLog log_;
};

// Result of re-running a recorded schedule (times and edges) from an initial
// field. With `params` equal to those of the recording run the returned log
// coincides with the recorded one.
struct Replay {
  std::vector<double> values;
  EventLog log;
};

inline Replay replay_schedule(const LatticeGraph& graph, std::vector<double> initial, const ModelParams& params,
                              const EventLog& schedule) {
  Replay r{std::move(initial), {}};
  r.log.horizon = schedule.horizon;
  r.log.events.reserve(schedule.size());
  for (const Event& ev : schedule.events) {
    const Edge& uv = graph.edge(ev.edge);
    double& a = r.values[uv.u];
    double& b = r.values[uv.v];
    Event out{ev.time, ev.edge, false, a, b};
    const UpdateResult u = apply_update(a, b, params);
    if (u.accepted) {
      a = u.a;
      b = u.b;
      out.accepted = true;
    }
    r.log.events.push_back(out);
  }
  return r;
}

// Applies the recorded outcomes of a log (no threshold test) and returns the
// state at time t. Throws if the log does not cover t or if a recorded
// pre-value disagrees with the replayed one.
inline std::vector<double> state_at(const LatticeGraph& graph, std::vector<double> initial, double mu,
                                    const EventLog& log, double t) {
  if (t > log.horizon) throw std::invalid_argument("log does not cover the requested time");
  for (const Event& ev : log.events) {
    if (ev.time > t) break;
    const Edge& uv = graph.edge(ev.edge);
    double& a = initial[uv.u];
    double& b = initial[uv.v];
    if (a != ev.pre_u || b != ev.pre_v) throw std::runtime_error("log is inconsistent with the initial field");
    if (ev.accepted) {
      const double delta = mu * (b - a);
      a += delta;
      b -= delta;
    }
  }
  return initial;
}

// Lengths of the runs between consecutive edges of a ring that saw no event in
// [0, t], scanning once around the ring. Empty when every edge fired.
inline std::vector<std::size_t> quiet_intervals(const EventLog& log, const LatticeGraph& ring, double t) {
  if (ring.dimension() != 1 || ring.spec().boundary != Boundary::periodic)
    throw std::invalid_argument("quiet_intervals needs a ring");
  if (t > log.horizon) throw std::invalid_argument("log does not cover the requested time");
  const std::size_t n = ring.edge_count();
  std::vector<bool> fired(n, false);
  for (const Event& ev : log.events) {
    if (ev.time > t) break;
    fired[ring.ring_position(ev.edge)] = true;
  }
  std::vector<std::size_t> quiet;
  for (std::size_t i = 0; i < n; ++i)
    if (!fired[i]) quiet.push_back(i);
  std::vector<std::size_t> lengths;
  if (quiet.empty()) return lengths;
  lengths.reserve(quiet.size());
  for (std::size_t k = 0; k + 1 < quiet.size(); ++k) lengths.push_back(quiet[k + 1] - quiet[k]);
  lengths.push_back(quiet.front() + n - quiet.back());
  return lengths;
}

namespace detail {
inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return {buf, res.ptr};
}

inline double parse_double(std::string_view s) {
  double x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("cannot parse number '" + std::string(s) + "'");
  return x;
}
}  // namespace detail

inline constexpr std::string_view kTraceSchema = "deffuant.trace.v1";

// CSV trace. The first line is "# schema=deffuant.trace.v1 horizon=<T>"
// followed by `meta` (space-separated key=value pairs); then the column header.
inline void write_trace_csv(std::ostream& os, const EventLog& log, const std::string& meta = {}) {
  os << "# schema=" << kTraceSchema << " horizon=" << detail::format_double(log.horizon);
  if (!meta.empty()) os << ' ' << meta;
  os << "\ntime,edge,accepted,pre_u,pre_v\n";
  for (const Event& ev : log.events) {
    os << detail::format_double(ev.time) << ',' << ev.edge << ',' << (ev.accepted ? 1 : 0) << ','
       << detail::format_double(ev.pre_u) << ',' << detail::format_double(ev.pre_v) << '\n';
  }
}

inline EventLog read_trace_csv(std::istream& is) {
  EventLog log;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# schema=", 0) != 0) throw std::runtime_error("trace: missing header");
  std::istringstream head(line.substr(2));
  std::string kv;
  bool schema_ok = false;
  bool have_horizon = false;
  while (head >> kv) {
    if (kv == "schema=" + std::string(kTraceSchema)) schema_ok = true;
    if (kv.rfind("horizon=", 0) == 0) {
      log.horizon = detail::parse_double(std::string_view(kv).substr(8));
      have_horizon = true;
    }
  }
  if (!schema_ok) throw std::runtime_error("trace: unsupported schema");
  if (!have_horizon) throw std::runtime_error("trace: missing horizon");
  if (!std::getline(is, line) || line != "time,edge,accepted,pre_u,pre_v")
    throw std::runtime_error("trace: missing column header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::string_view rest(line);
    std::string_view f[5];
    for (int i = 0; i < 5; ++i) {
      const auto c = rest.find(',');
      if ((i < 4) != (c != std::string_view::npos)) throw std::runtime_error("trace: expected 5 fields");
      f[i] = rest.substr(0, c);
      rest = c == std::string_view::npos ? std::string_view{} : rest.substr(c + 1);
    }
    Event ev{};
    ev.time = detail::parse_double(f[0]);
    const auto er = std::from_chars(f[1].data(), f[1].data() + f[1].size(), ev.edge);
    if (er.ec != std::errc{} || er.ptr != f[1].data() + f[1].size()) throw std::runtime_error("trace: bad edge id");
    if (f[2] != "0" && f[2] != "1") throw std::runtime_error("trace: bad accepted flag");
    ev.accepted = f[2] == "1";
    ev.pre_u = detail::parse_double(f[3]);
    ev.pre_v = detail::parse_double(f[4]);
    log.events.push_back(ev);
  }
  return log;
}

}  // namespace deffuant

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "deffuant/distribution.hpp"
#include "deffuant/engine.hpp"
#include "deffuant/lattice.hpp"

namespace deffuant {

/// Convex energy of a single opinion value, restricted to a domain [lo, hi].
///
/// Values are reported after subtracting the minimum over the domain, so the
/// energy is nonnegative there. Evaluation outside the domain is allowed and
/// uses the same formula.
class EnergyFunction {
 public:
  struct Quadratic {};
  struct Absolute {
    double center;
  };
  // slope_left on x < bend, slope_right on x > bend, value 0 at the bend
  struct OneBend {
    double bend, slope_left, slope_right;
  };
  // piecewise-linear interpolation of (xs, ys) with linear extension
  struct Tabulated {
    std::vector<double> xs, ys;
  };
  struct Exponential {};
  struct Linear {
    double slope;
  };
  using Variant = std::variant<Quadratic, Absolute, OneBend, Tabulated, Exponential, Linear>;

  static EnergyFunction quadratic(double lo = 0, double hi = 1) { return {Quadratic{}, lo, hi}; }
  static EnergyFunction absolute(double center, double lo = 0, double hi = 1) { return {Absolute{center}, lo, hi}; }
  static EnergyFunction one_bend(double bend, double slope_left, double slope_right, double lo = 0, double hi = 1) {
    if (!(slope_left <= slope_right)) throw std::invalid_argument("one-bend energy must have increasing slopes");
    return {OneBend{bend, slope_left, slope_right}, lo, hi};
  }
  static EnergyFunction tabulated(std::vector<double> xs, std::vector<double> ys, double lo = 0, double hi = 1) {
    if (xs.size() < 2 || xs.size() != ys.size()) throw std::invalid_argument("tabulated energy needs >= 2 knots");
    for (std::size_t i = 1; i < xs.size(); ++i)
      if (!(xs[i - 1] < xs[i])) throw std::invalid_argument("tabulated knots must increase");
    for (std::size_t i = 2; i < xs.size(); ++i) {
      const double s0 = (ys[i - 1] - ys[i - 2]) / (xs[i - 1] - xs[i - 2]);
      const double s1 = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
      if (s1 < s0 - 1e-12 * std::max(1.0, std::abs(s0))) throw std::invalid_argument("tabulated energy is not convex");
    }
    return {Tabulated{std::move(xs), std::move(ys)}, lo, hi};
  }
  static EnergyFunction exponential(double lo = 0, double hi = 1) { return {Exponential{}, lo, hi}; }
  static EnergyFunction linear(double slope, double lo = 0, double hi = 1) { return {Linear{slope}, lo, hi}; }

  [[nodiscard]] double lo() const { return lo_; }
  [[nodiscard]] double hi() const { return hi_; }
  [[nodiscard]] const Variant& variant() const { return v_; }
  [[nodiscard]] bool is_quadratic() const { return std::holds_alternative<Quadratic>(v_); }

  // Formula value before normalization.
  [[nodiscard]] double raw(double x) const {
    return std::visit(Overloaded{
                          [&](const Quadratic&) { return x * x; },
                          [&](const Absolute& a) { return std::abs(x - a.center); },
                          [&](const OneBend& b) {
                            return x < b.bend ? b.slope_left * (x - b.bend) : b.slope_right * (x - b.bend);
                          },
                          [&](const Tabulated& t) { return interpolate(t, x); },
                          [&](const Exponential&) { return std::exp(x); },
                          [&](const Linear& l) { return l.slope * x; },
                      },
                      v_);
  }

  [[nodiscard]] double operator()(double x) const { return raw(x) - offset_; }

  // A point of [lo, hi] where the energy is minimal.
  [[nodiscard]] double minimizer() const { return argmin_; }

  [[nodiscard]] std::string name() const {
    std::ostringstream os;
    os.precision(17);
    std::visit(Overloaded{
                   [&](const Quadratic&) { os << "quadratic"; },
                   [&](const Absolute& a) { os << "absolute(" << a.center << ")"; },
                   [&](const OneBend& b) { os << "one_bend(" << b.bend << "," << b.slope_left << "," << b.slope_right << ")"; },
                   [&](const Tabulated& t) { os << "tabulated(" << t.xs.size() << " knots)"; },
                   [&](const Exponential&) { os << "exponential"; },
                   [&](const Linear& l) { os << "linear(" << l.slope << ")"; },
               },
               v_);
    return os.str();
  }

 private:
  EnergyFunction(Variant v, double lo, double hi) : v_(std::move(v)), lo_(lo), hi_(hi) {
    if (!(lo < hi)) throw std::invalid_argument("energy domain needs lo < hi");
    std::vector<double> candidates{lo, hi};
    std::visit(Overloaded{
                   [&](const Quadratic&) { candidates.push_back(0.0); },
                   [&](const Absolute& a) { candidates.push_back(a.center); },
                   [&](const OneBend& b) { candidates.push_back(b.bend); },
                   [&](const Tabulated& t) { candidates.insert(candidates.end(), t.xs.begin(), t.xs.end()); },
                   [&](const auto&) {},
               },
               v_);
    argmin_ = lo;
    double best = raw(lo);
    for (double c : candidates) {
      if (c < lo || c > hi) continue;
      if (raw(c) < best) {
        best = raw(c);
        argmin_ = c;
      }
    }
    offset_ = best;
  }

  static double interpolate(const Tabulated& t, double x) {
    auto it = std::upper_bound(t.xs.begin(), t.xs.end(), x);
    std::size_t i = static_cast<std::size_t>(it - t.xs.begin());
    i = std::clamp<std::size_t>(i, 1, t.xs.size() - 1);
    const double s = (t.ys[i] - t.ys[i - 1]) / (t.xs[i] - t.xs[i - 1]);
    return t.ys[i - 1] + s * (x - t.xs[i - 1]);
  }

  Variant v_;
  double lo_, hi_;
  double offset_ = 0;
  double argmin_ = 0;
};

// Energy lost along an accepted edge: E(a) + E(b) - E(a') - E(b').
inline double loss_of_update(double a, double b, double mu, const EnergyFunction& energy) {
  if (energy.is_quadratic()) return 2.0 * mu * (1.0 - mu) * (a - b) * (a - b);
  const double delta = mu * (b - a);
  return energy(a) + energy(b) - energy(a + delta) - energy(b - delta);
}

// E[E(X)] for piecewise-linear energies, exact through partial moments.
inline double expected_energy(const EnergyFunction& energy, const DistributionSpec& spec) {
  const double m = mean(spec);
  return std::visit(
      Overloaded{
          [&](const EnergyFunction::Absolute& a) { return expected_abs_deviation(spec, a.center) - energy.raw(energy.minimizer()); },
          [&](const EnergyFunction::OneBend& b) {
            return -b.slope_left * lower_partial_moment(spec, b.bend) + b.slope_right * upper_partial_moment(spec, b.bend) -
                   energy.raw(energy.minimizer());
          },
          [&](const EnergyFunction::Linear& l) { return l.slope * m - energy.raw(energy.minimizer()); },
          [&](const EnergyFunction::Tabulated& t) {
            // f(x) = f(x0) + s0 (x - x0) + sum_i (s_i - s_{i-1}) (x - x_i)^+
            std::vector<double> s(t.xs.size() - 1);
            for (std::size_t i = 0; i + 1 < t.xs.size(); ++i) s[i] = (t.ys[i + 1] - t.ys[i]) / (t.xs[i + 1] - t.xs[i]);
            double e = t.ys[0] + s[0] * (m - t.xs[0]);
            for (std::size_t i = 1; i + 1 < t.xs.size(); ++i) e += (s[i] - s[i - 1]) * upper_partial_moment(spec, t.xs[i]);
            return e - energy.raw(energy.minimizer());
          },
          [&](const auto&) -> double { throw std::invalid_argument("expected_energy supports piecewise-linear energies"); },
      },
      energy.variant());
}

// Per-edge energy bookkeeping while replaying a run.
struct EdgeLossLedger {
  std::vector<double> loss;         // cumulative W_loss per edge
  std::vector<double> last_accept;  // -inf before the first accepted event

  explicit EdgeLossLedger(std::size_t edges)
      : loss(edges, 0.0), last_accept(edges, -std::numeric_limits<double>::infinity()) {}
};

// W_tot(v) = E(eta(v)) + half the cumulative loss of every edge at v.
inline std::vector<double> total_energy_field(const LatticeGraph& g, const std::vector<double>& values,
                                              const EdgeLossLedger& ledger, const EnergyFunction& energy) {
  std::vector<double> w(values.size());
  for (VertexId v = 0; v < values.size(); ++v) {
    w[v] = energy(values[v]);
    auto [it, end] = g.incident(v);
    for (; it != end; ++it) w[v] += 0.5 * ledger.loss[*it];
  }
  return w;
}

struct AuditOptions {
  double loss_floor = -1e-15;          // smallest tolerated per-event loss
  double pair_tolerance = 1e-12;       // |pair W_tot change| per event
  double global_tolerance = 1e-6;      // |sum W_tot - initial|
  double mass_tolerance = 1e-8;        // |sum eta - initial|
  std::uint64_t checkpoint_every = 10000;
};

struct AuditReport {
  std::string energy;
  std::uint64_t events = 0;
  std::uint64_t accepted = 0;
  double min_loss = 0;
  double max_pair_residual = 0;
  double max_mass_drift = 0;
  double max_global_drift = 0;
  double initial_total = 0;
  double final_total = 0;
  bool consistent = true;  // recorded pre-values match the replay
  std::optional<std::uint64_t> first_violation;
  std::string violation;
  EdgeLossLedger ledger{0};

  [[nodiscard]] bool ok() const { return consistent && !first_violation; }
};

/// Replays a recorded run and audits the energy and mass bookkeeping.
///
/// Per accepted event the pairwise change of W_tot(u) + W_tot(v) must vanish
/// and the loss must be nonnegative. At every checkpoint (and at the end) the
/// global sums of eta and of W_tot are recomputed from scratch and compared to
/// their initial values.
inline AuditReport audit_run(const LatticeGraph& g, const std::vector<double>& initial, double mu,
                             const EventLog& log, const EnergyFunction& energy, const AuditOptions& opt = {}) {
  AuditReport r;
  r.energy = energy.name();
  r.ledger = EdgeLossLedger(g.edge_count());
  std::vector<double> eta = initial;
  double mass0 = 0;
  for (double x : eta) {
    mass0 += x;
    r.initial_total += energy(x);
  }
  auto flag = [&](std::uint64_t index, const std::string& what) {
    if (!r.first_violation) {
      r.first_violation = index;
      r.violation = what;
    }
  };
  auto checkpoint = [&](std::uint64_t index) {
    double mass = 0;
    double total = 0;
    for (double x : eta) {
      mass += x;
      total += energy(x);
    }
    for (double l : r.ledger.loss) total += l;
    r.final_total = total;
    const double dm = std::abs(mass - mass0);
    const double dw = std::abs(total - r.initial_total);
    r.max_mass_drift = std::max(r.max_mass_drift, dm);
    r.max_global_drift = std::max(r.max_global_drift, dw);
    if (dm > opt.mass_tolerance) flag(index, "opinion sum drift");
    if (dw > opt.global_tolerance) flag(index, "global energy drift");
  };
  r.min_loss = std::numeric_limits<double>::infinity();
  for (const Event& ev : log.events) {
    const Edge& uv = g.edge(ev.edge);
    double& a = eta[uv.u];
    double& b = eta[uv.v];
    if (a != ev.pre_u || b != ev.pre_v) {
      r.consistent = false;
      flag(r.events, "recorded pre-values disagree with the replay");
      break;
    }
    if (ev.accepted) {
      const double loss = loss_of_update(a, b, mu, energy);
      const double before = energy(a) + energy(b);
      const double delta = mu * (b - a);
      a += delta;
      b -= delta;
      const double residual = std::abs(energy(a) + energy(b) + loss - before);
      r.max_pair_residual = std::max(r.max_pair_residual, residual);
      r.min_loss = std::min(r.min_loss, loss);
      r.ledger.loss[ev.edge] += loss;
      r.ledger.last_accept[ev.edge] = ev.time;
      ++r.accepted;
      if (loss < opt.loss_floor) flag(r.events, "negative loss");
      if (residual > opt.pair_tolerance) flag(r.events, "pairwise energy not conserved");
    }
    ++r.events;
    if (opt.checkpoint_every && r.events % opt.checkpoint_every == 0) checkpoint(r.events);
  }
  checkpoint(r.events);
  if (r.accepted == 0) r.min_loss = 0;
  return r;
}

// 1/2 + E|X - 1/2| for a law supported in [0, 1].
inline double consensus_bound_abs(const DistributionSpec& spec) {
  const auto d = describe(spec);
  if (!d.bounded || d.a < -1e-12 || d.b > 1 + 1e-12)
    throw std::invalid_argument("bound needs a law supported in [0, 1]; rescale it first");
  return 0.5 + expected_abs_deviation(spec, 0.5);
}

struct OptimalBound {
  double theta = 1;
  double bend = 0.5;    // m
  double weight = 0.5;  // lambda: E(x) proportional to (1 - lambda)(m - x)^+ + lambda (x - m)^+
  double jensen_floor = 0.5;
  EnergyFunction witness = EnergyFunction::absolute(0.5);
};

namespace detail {
// Bound certified by E = (1 - lambda)(m - x)^+ + lambda (x - m)^+.
inline double one_bend_bound(const DistributionSpec& spec, double floor, double m, double lambda) {
  const double k = (1 - lambda) * lower_partial_moment(spec, m) + lambda * upper_partial_moment(spec, m);
  const double right = lambda > 0 ? m + k / lambda : std::numeric_limits<double>::infinity();
  const double left = lambda < 1 ? 1 - m + k / (1 - lambda) : std::numeric_limits<double>::infinity();
  return std::min(1.0, std::max({right, left, m, 1 - m, floor}));
}

template <class F>
double golden_min(F&& f, double lo, double hi, double tol, double* arg = nullptr) {
  constexpr double r = 0.6180339887498949;
  double x1 = hi - r * (hi - lo);
  double x2 = lo + r * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - r * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + r * (hi - lo);
      f2 = f(x2);
    }
  }
  const double x = f1 <= f2 ? x1 : x2;
  if (arg) *arg = x;
  return std::min(f1, f2);
}
}  // namespace detail

/// Smallest threshold certified by a convex energy with one bend.
///
/// For bend m and weight lambda the energy (1 - lambda)(m - x)^+ + lambda (x - m)^+
/// has expectation K and certifies every theta above
/// max{m + K / lambda, 1 - m + K / (1 - lambda), m, 1 - m, 1/2}. The result is
/// clamped below by max{E X, 1 - E X}. lambda is optimized by golden section for
/// each m; m runs over a 1e-3 grid plus support points and the mean, and the best
/// grid point is refined.
inline OptimalBound consensus_bound_optimal(const DistributionSpec& spec) {
  const auto d = describe(spec);
  if (!d.bounded || d.a < -1e-12 || d.b > 1 + 1e-12)
    throw std::invalid_argument("bound needs a law supported in [0, 1]; rescale it first");
  if (d.a == d.b) throw std::invalid_argument("bound needs a nondegenerate law");
  OptimalBound out;
  out.jensen_floor = std::max({0.5, d.mean, 1 - d.mean});
  const double floor = out.jensen_floor;
  auto best_lambda = [&](double m, double* lambda) {
    return detail::golden_min([&](double l) { return detail::one_bend_bound(spec, floor, m, l); }, 0.0, 1.0, 1e-10,
                              lambda);
  };
  std::vector<double> grid;
  for (int i = 0; i <= 1000; ++i) grid.push_back(i * 1e-3);
  for (auto& pc : support_pieces(spec)) {
    grid.push_back(std::clamp(pc.lo, 0.0, 1.0));
    grid.push_back(std::clamp(pc.hi, 0.0, 1.0));
  }
  grid.push_back(d.mean);
  double best = std::numeric_limits<double>::infinity();
  double best_m = 0.5;
  double best_l = 0.5;
  for (double m : grid) {
    double l = 0.5;
    const double v = best_lambda(m, &l);
    if (v < best) {
      best = v;
      best_m = m;
      best_l = l;
    }
  }
  {
    double m = 0.5;
    const double lo = std::max(0.0, best_m - 1e-3);
    const double hi = std::min(1.0, best_m + 1e-3);
    const double v = detail::golden_min([&](double x) { return best_lambda(x, nullptr); }, lo, hi, 1e-10, &m);
    if (v < best) {
      best = v;
      best_m = m;
      best_lambda(m, &best_l);
    }
  }
  // The symmetric absolute-value energy is always a candidate.
  const double abs_candidate = detail::one_bend_bound(spec, floor, 0.5, 0.5);
  if (abs_candidate <= best) {
    best = abs_candidate;
    best_m = 0.5;
    best_l = 0.5;
  }
  out.theta = std::max(best, floor);
  out.bend = best_m;
  out.weight = best_l;
  // scale the witness so that max{E(0), E(1)} = 1/2
  const double scale = 0.5 / std::max((1 - best_l) * best_m, best_l * (1 - best_m));
  out.witness = EnergyFunction::one_bend(best_m, -(1 - best_l) * scale, best_l * scale);
  return out;
}

// E[Z | Z > t].
inline double mean_residual_life(const DistributionSpec& spec, double t) {
  const double tail = 1.0 - cdf(spec, t);
  if (!(tail > 0)) throw std::invalid_argument("mean residual life needs P(Z > t) > 0");
  const double up = upper_partial_moment(spec, t);
  if (std::isinf(up)) return up;
  return t + up / tail;
}

struct ConvexOrderEntry {
  std::string function;
  std::uint64_t accepted = 0;
  std::uint64_t violations = 0;  // accepted events raising the spatial mean by more than the tolerance
  double max_increase = 0;       // largest per-event rise of the spatial mean (<= 0 if none)
  double max_quadratic_mismatch = 0;  // |drop - 2 mu (1 - mu) gap^2 / N|, quadratic only
  double first_mean = 0;
  double last_mean = 0;
};

struct ConvexOrderReport {
  std::vector<ConvexOrderEntry> entries;
  double tolerance = 1e-12;

  [[nodiscard]] std::uint64_t violations() const {
    std::uint64_t v = 0;
    for (auto& e : entries) v += e.violations;
    return v;
  }
};

inline std::vector<EnergyFunction> default_convex_tests() {
  return {EnergyFunction::quadratic(), EnergyFunction::absolute(0.5), EnergyFunction::exponential()};
}

// Tracks (1/N) sum_v phi(eta_t(v)) through a recorded run for each phi; at every
// accepted event the mean must not increase beyond `tolerance`.
inline ConvexOrderReport convex_order_monitor(const LatticeGraph& g, const std::vector<double>& initial, double mu,
                                              const EventLog& log, const std::vector<EnergyFunction>& tests,
                                              double tolerance = 1e-12) {
  ConvexOrderReport r;
  r.tolerance = tolerance;
  const auto n = static_cast<double>(initial.size());
  std::vector<double> eta = initial;
  for (auto& phi : tests) {
    ConvexOrderEntry e;
    e.function = phi.name();
    for (double x : eta) e.first_mean += phi(x);
    e.first_mean /= n;
    e.last_mean = e.first_mean;
    e.max_increase = -std::numeric_limits<double>::infinity();
    r.entries.push_back(e);
  }
  for (const Event& ev : log.events) {
    if (!ev.accepted) continue;
    const Edge& uv = g.edge(ev.edge);
    double& a = eta[uv.u];
    double& b = eta[uv.v];
    const double delta = mu * (b - a);
    const double a1 = a + delta;
    const double b1 = b - delta;
    for (std::size_t i = 0; i < tests.size(); ++i) {
      const auto& phi = tests[i];
      auto& e = r.entries[i];
      const double change = (phi(a1) + phi(b1) - phi(a) - phi(b)) / n;
      ++e.accepted;
      e.last_mean += change;
      e.max_increase = std::max(e.max_increase, change);
      if (change > tolerance) ++e.violations;
      if (phi.is_quadratic()) {
        const double expected = 2.0 * mu * (1.0 - mu) * (a - b) * (a - b) / n;
        e.max_quadratic_mismatch = std::max(e.max_quadratic_mismatch, std::abs(-change - expected));
      }
    }
    a = a1;
    b = b1;
  }
  for (auto& e : r.entries)
    if (e.accepted == 0) e.max_increase = 0;
  return r;
}

}  // namespace deffuant

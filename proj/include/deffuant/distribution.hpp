#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "deffuant/rng.hpp"

namespace deffuant {

/// Law of a single initial opinion.
///
/// Bounded variants carry enough structure for the support descriptor to be
/// computed exactly; the Pareto variant is the unbounded one. Affine and
/// mixture variants compose other specs, so every spec is an immutable tree.
class DistributionSpec {
 public:
  struct Uniform {
    double a, b;
  };
  struct Beta {
    double alpha, beta;
  };
  struct Discrete {
    std::vector<double> atoms;    // strictly increasing
    std::vector<double> weights;  // positive, sum to one
  };
  struct Interval {
    double lo, hi;
  };
  struct UnionUniform {
    std::vector<Interval> intervals;  // sorted, pairwise disjoint, lo < hi
  };
  struct Pareto {
    double shape, scale;  // density shape * scale^shape / x^(shape+1) on [scale, inf)
  };
  struct Affine {
    std::shared_ptr<const DistributionSpec> base;
    double scale, shift;  // Y = scale * X + shift
  };
  struct Mixture {
    std::vector<std::shared_ptr<const DistributionSpec>> components;
    std::vector<double> weights;
  };
  using Variant = std::variant<Uniform, Beta, Discrete, UnionUniform, Pareto, Affine, Mixture>;

  static DistributionSpec uniform(double a, double b) {
    if (!(a < b)) throw std::invalid_argument("uniform(a, b) needs a < b");
    return DistributionSpec(Uniform{a, b});
  }

  static DistributionSpec beta(double alpha, double beta) {
    if (!(alpha > 0 && beta > 0)) throw std::invalid_argument("beta parameters must be positive");
    return DistributionSpec(Beta{alpha, beta});
  }

  // Atoms may be given in any order; repeated atoms are merged and zero
  // weights dropped. Weights must sum to one within 1e-9.
  static DistributionSpec discrete(std::vector<double> atoms, std::vector<double> weights) {
    if (atoms.empty() || atoms.size() != weights.size())
      throw std::invalid_argument("discrete spec needs matching, nonempty atoms and weights");
    double total = 0;
    for (double w : weights) {
      if (!(w >= 0) || !std::isfinite(w)) throw std::invalid_argument("discrete weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("discrete weights must sum to one");
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return atoms[i] < atoms[j]; });
    Discrete d;
    for (std::size_t i : order) {
      if (!std::isfinite(atoms[i])) throw std::invalid_argument("discrete atoms must be finite");
      if (weights[i] == 0) continue;
      if (!d.atoms.empty() && d.atoms.back() == atoms[i]) {
        d.weights.back() += weights[i];
      } else {
        d.atoms.push_back(atoms[i]);
        d.weights.push_back(weights[i]);
      }
    }
    return DistributionSpec(std::move(d));
  }

  static DistributionSpec uniform_atoms(std::vector<double> atoms) {
    std::vector<double> w(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
    return discrete(std::move(atoms), std::move(w));
  }

  static DistributionSpec point_mass(double c) { return discrete({c}, {1.0}); }

  // Uniform with respect to length on a union of disjoint closed intervals.
  static DistributionSpec union_uniform(std::vector<Interval> intervals) {
    if (intervals.empty()) throw std::invalid_argument("union spec needs at least one interval");
    std::sort(intervals.begin(), intervals.end(), [](auto& x, auto& y) { return x.lo < y.lo; });
    for (std::size_t i = 0; i < intervals.size(); ++i) {
      if (!(intervals[i].lo < intervals[i].hi)) throw std::invalid_argument("union intervals must be nonempty");
      if (i > 0 && !(intervals[i - 1].hi < intervals[i].lo))
        throw std::invalid_argument("union intervals must be disjoint");
    }
    return DistributionSpec(UnionUniform{std::move(intervals)});
  }

  static DistributionSpec pareto(double shape, double scale = 1.0) {
    if (!(shape > 0 && scale > 0)) throw std::invalid_argument("pareto shape and scale must be positive");
    return DistributionSpec(Pareto{shape, scale});
  }

  static DistributionSpec affine(DistributionSpec base, double scale, double shift) {
    if (!(scale != 0) || !std::isfinite(scale) || !std::isfinite(shift))
      throw std::invalid_argument("affine transform needs a finite nonzero scale");
    return DistributionSpec(Affine{std::make_shared<const DistributionSpec>(std::move(base)), scale, shift});
  }

  static DistributionSpec mixture(std::vector<DistributionSpec> components, std::vector<double> weights) {
    if (components.empty() || components.size() != weights.size())
      throw std::invalid_argument("mixture needs matching, nonempty components and weights");
    double total = 0;
    for (double w : weights) {
      if (!(w > 0)) throw std::invalid_argument("mixture weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to one");
    Mixture m;
    for (auto& c : components) m.components.push_back(std::make_shared<const DistributionSpec>(std::move(c)));
    m.weights = std::move(weights);
    return DistributionSpec(std::move(m));
  }

  [[nodiscard]] const Variant& variant() const { return v_; }

  template <class T>
  [[nodiscard]] const T* as() const {
    return std::get_if<T>(&v_);
  }

 private:
  explicit DistributionSpec(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

template <class... F>
struct Overloaded : F... {
  using F::operator()...;
};
template <class... F>
Overloaded(F...) -> Overloaded<F...>;

// A closed piece of the support; lo == hi with atom == true is a point mass.
struct SupportPiece {
  double lo, hi;
  bool atom;
};

namespace detail {
inline double union_length(const DistributionSpec::UnionUniform& u) {
  double total = 0;
  for (auto& iv : u.intervals) total += iv.hi - iv.lo;
  return total;
}

inline void collect_pieces(const DistributionSpec& spec, std::vector<SupportPiece>& out) {
  std::visit(Overloaded{
                 [&](const DistributionSpec::Uniform& u) { out.push_back({u.a, u.b, false}); },
                 [&](const DistributionSpec::Beta&) { out.push_back({0.0, 1.0, false}); },
                 [&](const DistributionSpec::Discrete& d) {
                   for (double x : d.atoms) out.push_back({x, x, true});
                 },
                 [&](const DistributionSpec::UnionUniform& u) {
                   for (auto& iv : u.intervals) out.push_back({iv.lo, iv.hi, false});
                 },
                 [&](const DistributionSpec::Pareto& p) {
                   out.push_back({p.scale, std::numeric_limits<double>::infinity(), false});
                 },
                 [&](const DistributionSpec::Affine& a) {
                   std::vector<SupportPiece> inner;
                   collect_pieces(*a.base, inner);
                   for (auto& pc : inner) {
                     double lo = a.scale * pc.lo + a.shift;
                     double hi = a.scale * pc.hi + a.shift;
                     if (lo > hi) std::swap(lo, hi);
                     out.push_back({lo, hi, pc.atom});
                   }
                 },
                 [&](const DistributionSpec::Mixture& m) {
                   for (auto& c : m.components) collect_pieces(*c, out);
                 },
             },
             spec.variant());
}
}  // namespace detail

inline std::vector<SupportPiece> support_pieces(const DistributionSpec& spec) {
  std::vector<SupportPiece> out;
  detail::collect_pieces(spec, out);
  std::sort(out.begin(), out.end(), [](auto& x, auto& y) { return x.lo < y.lo || (x.lo == y.lo && x.hi < y.hi); });
  return out;
}

inline bool is_bounded(const DistributionSpec& spec) {
  for (auto& pc : support_pieces(spec))
    if (!std::isfinite(pc.lo) || !std::isfinite(pc.hi)) return false;
  return true;
}

// E[X]; +inf for a Pareto law with shape <= 1 (scaled and shifted accordingly).
inline double mean(const DistributionSpec& spec) {
  return std::visit(Overloaded{
                        [](const DistributionSpec::Uniform& u) { return 0.5 * (u.a + u.b); },
                        [](const DistributionSpec::Beta& b) { return b.alpha / (b.alpha + b.beta); },
                        [](const DistributionSpec::Discrete& d) {
                          double m = 0;
                          for (std::size_t i = 0; i < d.atoms.size(); ++i) m += d.weights[i] * d.atoms[i];
                          return m;
                        },
                        [](const DistributionSpec::UnionUniform& u) {
                          double m = 0;
                          for (auto& iv : u.intervals) m += (iv.hi - iv.lo) * 0.5 * (iv.lo + iv.hi);
                          return m / detail::union_length(u);
                        },
                        [](const DistributionSpec::Pareto& p) {
                          if (p.shape <= 1) return std::numeric_limits<double>::infinity();
                          return p.shape * p.scale / (p.shape - 1);
                        },
                        [](const DistributionSpec::Affine& a) { return a.scale * mean(*a.base) + a.shift; },
                        [](const DistributionSpec::Mixture& m) {
                          double s = 0;
                          for (std::size_t i = 0; i < m.components.size(); ++i)
                            s += m.weights[i] * mean(*m.components[i]);
                          return s;
                        },
                    },
                    spec.variant());
}

inline double cdf_below(const DistributionSpec& spec, double x);

// P(X <= x).
inline double cdf(const DistributionSpec& spec, double x) {
  return std::visit(Overloaded{
                        [&](const DistributionSpec::Uniform& u) { return std::clamp((x - u.a) / (u.b - u.a), 0.0, 1.0); },
                        [&](const DistributionSpec::Beta& b) {
                          if (x <= 0) return 0.0;
                          if (x >= 1) return 1.0;
                          return boost::math::ibeta(b.alpha, b.beta, x);
                        },
                        [&](const DistributionSpec::Discrete& d) {
                          double s = 0;
                          for (std::size_t i = 0; i < d.atoms.size() && d.atoms[i] <= x; ++i) s += d.weights[i];
                          return std::min(s, 1.0);
                        },
                        [&](const DistributionSpec::UnionUniform& u) {
                          double s = 0;
                          for (auto& iv : u.intervals) s += std::clamp(x, iv.lo, iv.hi) - iv.lo;
                          return s / detail::union_length(u);
                        },
                        [&](const DistributionSpec::Pareto& p) {
                          return x <= p.scale ? 0.0 : 1.0 - std::pow(p.scale / x, p.shape);
                        },
                        [&](const DistributionSpec::Affine& a) {
                          const double y = (x - a.shift) / a.scale;
                          return a.scale > 0 ? cdf(*a.base, y) : 1.0 - cdf_below(*a.base, y);
                        },
                        [&](const DistributionSpec::Mixture& m) {
                          double s = 0;
                          for (std::size_t i = 0; i < m.components.size(); ++i) s += m.weights[i] * cdf(*m.components[i], x);
                          return s;
                        },
                    },
                    spec.variant());
}

// P(X < x).
inline double cdf_below(const DistributionSpec& spec, double x) {
  return std::visit(Overloaded{
                        [&](const DistributionSpec::Discrete& d) {
                          double s = 0;
                          for (std::size_t i = 0; i < d.atoms.size() && d.atoms[i] < x; ++i) s += d.weights[i];
                          return std::min(s, 1.0);
                        },
                        [&](const DistributionSpec::Affine& a) {
                          const double y = (x - a.shift) / a.scale;
                          return a.scale > 0 ? cdf_below(*a.base, y) : 1.0 - cdf(*a.base, y);
                        },
                        [&](const DistributionSpec::Mixture& m) {
                          double s = 0;
                          for (std::size_t i = 0; i < m.components.size(); ++i)
                            s += m.weights[i] * cdf_below(*m.components[i], x);
                          return s;
                        },
                        [&](const auto&) { return cdf(spec, x); },  // atomless
                    },
                    spec.variant());
}

inline double upper_partial_moment(const DistributionSpec& spec, double c);

// E[(c - X)^+].
inline double lower_partial_moment(const DistributionSpec& spec, double c) {
  return std::visit(
      Overloaded{
          [&](const DistributionSpec::Uniform& u) {
            if (c <= u.a) return 0.0;
            const double top = std::min(c, u.b);
            return ((c - u.a) * (c - u.a) - (c - top) * (c - top)) / (2.0 * (u.b - u.a));
          },
          [&](const DistributionSpec::Beta& b) {
            if (c <= 0) return 0.0;
            const double m = b.alpha / (b.alpha + b.beta);
            if (c >= 1) return c - m;
            return c * boost::math::ibeta(b.alpha, b.beta, c) - m * boost::math::ibeta(b.alpha + 1, b.beta, c);
          },
          [&](const DistributionSpec::Discrete& d) {
            double s = 0;
            for (std::size_t i = 0; i < d.atoms.size(); ++i)
              if (d.atoms[i] < c) s += d.weights[i] * (c - d.atoms[i]);
            return s;
          },
          [&](const DistributionSpec::UnionUniform& u) {
            double s = 0;
            for (auto& iv : u.intervals) {
              if (c <= iv.lo) break;
              const double top = std::min(c, iv.hi);
              s += (c - iv.lo) * (c - iv.lo) - (c - top) * (c - top);
            }
            return s / (2.0 * detail::union_length(u));
          },
          [&](const DistributionSpec::Pareto& p) {
            if (c <= p.scale) return 0.0;
            // integral of the cdf over [scale, c]
            double tail = 0;
            if (p.shape == 1.0) {
              tail = p.scale * std::log(c / p.scale);
            } else {
              tail = std::pow(p.scale, p.shape) * (std::pow(c, 1 - p.shape) - std::pow(p.scale, 1 - p.shape)) /
                     (1 - p.shape);
            }
            return (c - p.scale) - tail;
          },
          [&](const DistributionSpec::Affine& a) {
            const double y = (c - a.shift) / a.scale;
            return a.scale > 0 ? a.scale * lower_partial_moment(*a.base, y)
                               : -a.scale * upper_partial_moment(*a.base, y);
          },
          [&](const DistributionSpec::Mixture& m) {
            double s = 0;
            for (std::size_t i = 0; i < m.components.size(); ++i)
              s += m.weights[i] * lower_partial_moment(*m.components[i], c);
            return s;
          },
      },
      spec.variant());
}

// E[(X - c)^+] = E[(c - X)^+] + E[X] - c.
inline double upper_partial_moment(const DistributionSpec& spec, double c) {
  const double m = mean(spec);
  if (std::isinf(m)) return m;
  return std::max(0.0, lower_partial_moment(spec, c) + m - c);
}

inline double expected_abs_deviation(const DistributionSpec& spec, double c) {
  return lower_partial_moment(spec, c) + upper_partial_moment(spec, c);
}

// Support end points, mean and the zero-mass gap around the mean.
struct SupportDescriptor {
  double a = 0;  // lower support end (may be -inf)
  double b = 0;  // upper support end (may be +inf)
  double mean = 0;
  bool bounded = true;
  double gap_width = 0;  // NaN when unbounded
  double gap_lo = 0;     // gap interval (gap_lo, gap_hi), meaningful when gap_width > 0
  double gap_hi = 0;
  bool atom_at_gap_lo = false;
  bool atom_at_gap_hi = false;
};

// Relative slack used when asking whether the mean falls inside a support piece.
inline constexpr double kSupportSlack = 1e-12;

inline SupportDescriptor describe(const DistributionSpec& spec) {
  const auto pieces = support_pieces(spec);
  SupportDescriptor d;
  d.mean = mean(spec);
  d.a = std::numeric_limits<double>::infinity();
  d.b = -std::numeric_limits<double>::infinity();
  for (auto& pc : pieces) {
    d.a = std::min(d.a, pc.lo);
    d.b = std::max(d.b, pc.hi);
  }
  d.bounded = std::isfinite(d.a) && std::isfinite(d.b);
  if (!d.bounded || !std::isfinite(d.mean)) {
    d.bounded = false;
    d.gap_width = std::numeric_limits<double>::quiet_NaN();
    return d;
  }
  const double slack = kSupportSlack * std::max(1.0, d.b - d.a);
  double below = -std::numeric_limits<double>::infinity();
  double above = std::numeric_limits<double>::infinity();
  for (auto& pc : pieces) {
    if (pc.lo - slack <= d.mean && d.mean <= pc.hi + slack) return d;  // mean in the support, h = 0
    if (pc.hi < d.mean) below = std::max(below, pc.hi);
    if (pc.lo > d.mean) above = std::min(above, pc.lo);
  }
  d.gap_lo = below;
  d.gap_hi = above;
  d.gap_width = above - below;
  for (auto& pc : pieces) {
    if (!pc.atom) continue;
    d.atom_at_gap_lo = d.atom_at_gap_lo || pc.lo == below;
    d.atom_at_gap_hi = d.atom_at_gap_hi || pc.lo == above;
  }
  return d;
}

// Critical confidence bound on Z for an i.i.d. law: max{E - a, b - E, h} when
// bounded; unbounded laws are subcritical for every threshold.
struct CriticalThreshold {
  double value = 0;
  bool always_subcritical = false;
};

inline CriticalThreshold theoretical_theta_c(const SupportDescriptor& d) {
  if (!d.bounded) return {std::numeric_limits<double>::infinity(), true};
  return {std::max({d.mean - d.a, d.b - d.mean, d.gap_width}), false};
}

inline CriticalThreshold theoretical_theta_c(const DistributionSpec& spec) {
  return theoretical_theta_c(describe(spec));
}

enum class Criticality { subcritical, supercritical, critical_consensus, critical_no_consensus, critical_unresolved };

inline const char* to_string(Criticality c) {
  switch (c) {
    case Criticality::subcritical: return "subcritical";
    case Criticality::supercritical: return "supercritical";
    case Criticality::critical_consensus: return "critical_consensus";
    case Criticality::critical_no_consensus: return "critical_no_consensus";
    case Criticality::critical_unresolved: return "critical_unresolved";
  }
  return "?";
}

// θ is treated as equal to θ_c when they differ by at most `tolerance`.
inline Criticality criticality_class(const SupportDescriptor& d, double theta, double tolerance = 1e-12) {
  if (!d.bounded) throw std::invalid_argument("criticality_class needs a bounded law");
  const double tc = theoretical_theta_c(d).value;
  if (theta < tc - tolerance) return Criticality::subcritical;
  if (theta > tc + tolerance) return Criticality::supercritical;
  const double spread = std::max(d.mean - d.a, d.b - d.mean);
  if (d.gap_width > spread + tolerance) {
    return d.atom_at_gap_lo && d.atom_at_gap_hi ? Criticality::critical_consensus
                                                : Criticality::critical_no_consensus;
  }
  return Criticality::critical_unresolved;
}

inline double sample(const DistributionSpec& spec, CounterRng& rng) {
  return std::visit(Overloaded{
                        [&](const DistributionSpec::Uniform& u) { return rng.uniform(u.a, u.b); },
                        [&](const DistributionSpec::Beta& b) {
                          if (b.alpha == 1.0 && b.beta == 1.0) return rng.uniform();
                          return rng.beta(b.alpha, b.beta);
                        },
                        [&](const DistributionSpec::Discrete& d) {
                          const double u = rng.uniform();
                          double acc = 0;
                          for (std::size_t i = 0; i + 1 < d.atoms.size(); ++i) {
                            acc += d.weights[i];
                            if (u < acc) return d.atoms[i];
                          }
                          return d.atoms.back();
                        },
                        [&](const DistributionSpec::UnionUniform& u) {
                          double pos = rng.uniform() * detail::union_length(u);
                          for (auto& iv : u.intervals) {
                            const double len = iv.hi - iv.lo;
                            if (pos <= len) return iv.lo + pos;
                            pos -= len;
                          }
                          return u.intervals.back().hi;
                        },
                        [&](const DistributionSpec::Pareto& p) {
                          return p.scale * std::pow(rng.uniform(), -1.0 / p.shape);
                        },
                        [&](const DistributionSpec::Affine& a) { return a.scale * sample(*a.base, rng) + a.shift; },
                        [&](const DistributionSpec::Mixture& m) {
                          const double u = rng.uniform();
                          double acc = 0;
                          std::size_t pick = m.components.size() - 1;
                          for (std::size_t i = 0; i + 1 < m.components.size(); ++i) {
                            acc += m.weights[i];
                            if (u < acc) {
                              pick = i;
                              break;
                            }
                          }
                          return sample(*m.components[pick], rng);
                        },
                    },
                    spec.variant());
}

inline std::string to_string(const DistributionSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  std::visit(Overloaded{
                 [&](const DistributionSpec::Uniform& u) { os << "uniform(" << u.a << "," << u.b << ")"; },
                 [&](const DistributionSpec::Beta& b) { os << "beta(" << b.alpha << "," << b.beta << ")"; },
                 [&](const DistributionSpec::Discrete& d) {
                   os << "discrete{";
                   for (std::size_t i = 0; i < d.atoms.size(); ++i)
                     os << (i ? " " : "") << d.atoms[i] << ":" << d.weights[i];
                   os << "}";
                 },
                 [&](const DistributionSpec::UnionUniform& u) {
                   os << "union{";
                   for (std::size_t i = 0; i < u.intervals.size(); ++i)
                     os << (i ? " " : "") << "[" << u.intervals[i].lo << "," << u.intervals[i].hi << "]";
                   os << "}";
                 },
                 [&](const DistributionSpec::Pareto& p) { os << "pareto(" << p.shape << "," << p.scale << ")"; },
                 [&](const DistributionSpec::Affine& a) {
                   os << a.scale << "*" << to_string(*a.base) << "+" << a.shift;
                 },
                 [&](const DistributionSpec::Mixture& m) {
                   os << "mixture{";
                   for (std::size_t i = 0; i < m.components.size(); ++i)
                     os << (i ? " " : "") << m.weights[i] << ":" << to_string(*m.components[i]);
                   os << "}";
                 },
             },
             spec.variant());
  return os.str();
}

// Centered Pareto law: Pareto(shape, scale) shifted by minus its median.
inline DistributionSpec centered_pareto(double shape, double scale = 1.0) {
  const double median = scale * std::pow(2.0, 1.0 / shape);
  return DistributionSpec::affine(DistributionSpec::pareto(shape, scale), 1.0, -median);
}

}  // namespace deffuant

#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deffuant/distribution.hpp"
#include "deffuant/engine.hpp"
#include "deffuant/experiments.hpp"
#include "deffuant/lattice.hpp"

namespace deffuant {

// Parse failure with a 1-based source position.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, std::size_t line, std::size_t column, const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}

  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Everything a config file can express: the experiment plus per-subcommand knobs.
struct ConfigFile {
  ExperimentConfig experiment;
  std::size_t sad_queries = 50;
  std::size_t flat_window = 64;
  VertexId probe = 0;
  std::vector<std::string> energies{"quadratic", "absolute"};
};

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

namespace detail {

struct Located {
  std::string value;
  std::size_t line = 0;
  std::size_t column = 0;      // column of the value
  std::size_t key_column = 0;  // column of the key
};

using Section = std::map<std::string, Located>;

inline std::string trim(std::string_view s, std::size_t* lead = nullptr) {
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  std::size_t e = s.size();
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  if (lead) *lead = b;
  return std::string(s.substr(b, e - b));
}

class Reader {
 public:
  Reader(std::string source, std::map<std::string, Section> sections)
      : source_(std::move(source)), sections_(std::move(sections)) {}

  [[noreturn]] void fail(const Located& at, const std::string& msg) const {
    throw ConfigError(source_, at.line, at.column, msg);
  }

  const Located* find(const std::string& section, const std::string& key) {
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_[section].push_back(key);
    return &k->second;
  }

  std::vector<std::string> words(const Located& at) const {
    std::vector<std::string> out;
    std::string cur;
    for (char c : at.value) {
      if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    if (out.empty()) fail(at, "empty value");
    return out;
  }

  double number(const Located& at, std::string_view word) const {
    double x = 0;
    auto res = std::from_chars(word.data(), word.data() + word.size(), x);
    if (res.ec != std::errc{} || res.ptr != word.data() + word.size())
      fail(at, "expected a number, got '" + std::string(word) + "'");
    return x;
  }

  std::uint64_t integer(const Located& at, std::string_view word) const {
    std::uint64_t x = 0;
    auto res = std::from_chars(word.data(), word.data() + word.size(), x);
    if (res.ec != std::errc{} || res.ptr != word.data() + word.size())
      fail(at, "expected a nonnegative integer, got '" + std::string(word) + "'");
    return x;
  }

  std::vector<double> numbers(const Located& at) const {
    std::vector<double> out;
    for (auto& w : words(at)) out.push_back(number(at, w));
    return out;
  }

  double one_number(const std::string& sec, const std::string& key, double fallback) {
    const Located* at = find(sec, key);
    if (!at) return fallback;
    auto v = numbers(*at);
    if (v.size() != 1) fail(*at, "expected a single number for '" + key + "'");
    return v[0];
  }

  std::uint64_t one_integer(const std::string& sec, const std::string& key, std::uint64_t fallback) {
    const Located* at = find(sec, key);
    if (!at) return fallback;
    auto w = words(*at);
    if (w.size() != 1) fail(*at, "expected a single integer for '" + key + "'");
    return integer(*at, w[0]);
  }

  // Every key present must have been consumed; reports the first stray one.
  void reject_unused() const {
    for (auto& [name, sec] : sections_) {
      auto u = used_.find(name);
      for (auto& [key, loc] : sec) {
        bool seen = false;
        if (u != used_.end())
          for (auto& k : u->second) seen = seen || k == key;
        if (!seen) {
          Located at = loc;
          at.column = loc.key_column;
          fail(at, "unknown key '" + key + "' in [" + name + "]");
        }
      }
    }
  }

  [[nodiscard]] Located section_anchor(const std::string& name) const {
    auto s = sections_.find(name);
    if (s == sections_.end() || s->second.empty()) return {"", 1, 1, 1};
    return s->second.begin()->second;
  }

 private:
  std::string source_;
  std::map<std::string, Section> sections_;
  std::map<std::string, std::vector<std::string>> used_;
};

inline const std::vector<std::string>& known_sections() {
  static const std::vector<std::string> s{"lattice", "distribution", "params", "experiment"};
  return s;
}

inline DistributionSpec parse_distribution(Reader& rd) {
  const std::string sec = "distribution";
  const Located* kind_at = rd.find(sec, "kind");
  const std::string kind = kind_at ? rd.words(*kind_at).at(0) : "uniform";
  Located where = kind_at ? *kind_at : rd.section_anchor(sec);
  auto guarded = [&](auto&& make) -> DistributionSpec {
    try {
      return make();
    } catch (const std::invalid_argument& e) {
      rd.fail(where, e.what());
    }
  };
  DistributionSpec base = guarded([&]() -> DistributionSpec {
    if (kind == "uniform") return DistributionSpec::uniform(rd.one_number(sec, "a", 0), rd.one_number(sec, "b", 1));
    if (kind == "beta") return DistributionSpec::beta(rd.one_number(sec, "alpha", 1), rd.one_number(sec, "beta", 1));
    if (kind == "discrete") {
      const Located* atoms = rd.find(sec, "atoms");
      if (!atoms) rd.fail(where, "discrete law needs 'atoms'");
      auto xs = rd.numbers(*atoms);
      const Located* weights = rd.find(sec, "weights");
      if (!weights) return DistributionSpec::uniform_atoms(xs);
      return DistributionSpec::discrete(xs, rd.numbers(*weights));
    }
    if (kind == "union") {
      const Located* iv = rd.find(sec, "intervals");
      if (!iv) rd.fail(where, "union law needs 'intervals'");
      std::vector<DistributionSpec::Interval> out;
      for (auto& w : rd.words(*iv)) {
        const auto colon = w.find(':');
        if (colon == std::string::npos) rd.fail(*iv, "interval '" + w + "' must look like lo:hi");
        out.push_back({rd.number(*iv, std::string_view(w).substr(0, colon)),
                       rd.number(*iv, std::string_view(w).substr(colon + 1))});
      }
      return DistributionSpec::union_uniform(out);
    }
    if (kind == "pareto") return DistributionSpec::pareto(rd.one_number(sec, "shape", 3), rd.one_number(sec, "scale", 1));
    if (kind == "centered_pareto")
      return centered_pareto(rd.one_number(sec, "shape", 3), rd.one_number(sec, "scale", 1));
    rd.fail(where, "unknown distribution kind '" + kind + "'");
  });
  const double scale = rd.one_number(sec, "affine_scale", 1.0);
  const double shift = rd.one_number(sec, "affine_shift", 0.0);
  if (scale == 1.0 && shift == 0.0) return base;
  return guarded([&] { return DistributionSpec::affine(base, scale, shift); });
}

inline std::string fmt(double x) { return format_double(x); }

inline std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + fmt(xs[i]);
  return s;
}

inline void emit_distribution(std::ostream& os, const DistributionSpec& spec) {
  const DistributionSpec* base = &spec;
  double scale = 1.0;
  double shift = 0.0;
  bool centered = false;
  if (auto* a = spec.as<DistributionSpec::Affine>()) {
    base = a->base.get();
    scale = a->scale;
    shift = a->shift;
    if (base->as<DistributionSpec::Affine>()) throw std::invalid_argument("nested affine laws cannot be written");
    if (auto* p = base->as<DistributionSpec::Pareto>())
      centered = scale == 1.0 && shift == -p->scale * std::pow(2.0, 1.0 / p->shape);
  }
  std::visit(Overloaded{
                 [&](const DistributionSpec::Uniform& u) { os << "kind = uniform\na = " << fmt(u.a) << "\nb = " << fmt(u.b) << '\n'; },
                 [&](const DistributionSpec::Beta& b) {
                   os << "kind = beta\nalpha = " << fmt(b.alpha) << "\nbeta = " << fmt(b.beta) << '\n';
                 },
                 [&](const DistributionSpec::Discrete& d) {
                   os << "kind = discrete\natoms = " << join(d.atoms) << "\nweights = " << join(d.weights) << '\n';
                 },
                 [&](const DistributionSpec::UnionUniform& u) {
                   os << "kind = union\nintervals =";
                   for (auto& iv : u.intervals) os << ' ' << fmt(iv.lo) << ':' << fmt(iv.hi);
                   os << '\n';
                 },
                 [&](const DistributionSpec::Pareto& p) {
                   os << "kind = " << (centered ? "centered_pareto" : "pareto") << "\nshape = " << fmt(p.shape)
                      << "\nscale = " << fmt(p.scale) << '\n';
                 },
                 [&](const DistributionSpec::Affine&) {},
                 [&](const DistributionSpec::Mixture&) {
                   throw std::invalid_argument("mixture laws cannot be written to a config file");
                 },
             },
             base->variant());
  if (!centered && (scale != 1.0 || shift != 0.0))
    os << "affine_scale = " << fmt(scale) << "\naffine_shift = " << fmt(shift) << '\n';
}

}  // namespace detail

/// Reads the INI-style config format.
///
///   [lattice]      sides, boundary
///   [distribution] kind = uniform | beta | discrete | union | pareto |
///                  centered_pareto | blocks, plus the parameters of the kind;
///                  optional affine_scale, affine_shift
///   [params]       mu, theta (one or more values)
///   [experiment]   horizon, events, replicas, seed, jobs, percolation, delta,
///                  quiet_fraction, checkpoints, ks_tolerance, sad_queries,
///                  flat_window, probe, energies
///
/// '#' and ';' start comments. Unknown sections and keys are errors.
inline ConfigFile parse_config(std::string_view text, const std::string& source = "config") {
  std::map<std::string, detail::Section> sections;
  std::string current;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::size_t cut = raw.find_first_of("#;");
    std::string_view body = raw.substr(0, cut);
    std::size_t lead = 0;
    const std::string line = detail::trim(body, &lead);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, line_no, lead + 1, "unterminated section header");
      current = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      bool known = false;
      for (auto& s : detail::known_sections()) known = known || s == current;
      if (!known) throw ConfigError(source, line_no, lead + 2, "unknown section [" + current + "]");
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, lead + 1, "expected 'key = value'");
    if (current.empty()) throw ConfigError(source, line_no, lead + 1, "key outside of any section");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    std::size_t vlead = 0;
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1), &vlead);
    if (key.empty()) throw ConfigError(source, line_no, lead + 1, "missing key");
    if (sections[current].count(key)) throw ConfigError(source, line_no, lead + 1, "duplicate key '" + key + "'");
    sections[current][key] = {value, line_no, lead + eq + 2 + vlead, lead + 1};
  }

  detail::Reader rd(source, sections);
  ConfigFile cf;
  ExperimentConfig& ec = cf.experiment;

  // lattice
  std::vector<std::size_t> sides{1000};
  if (const auto* at = rd.find("lattice", "sides")) {
    sides.clear();
    for (auto& w : rd.words(*at)) sides.push_back(rd.integer(*at, w));
  }
  const auto* dim_at = rd.find("lattice", "dimension");
  if (dim_at) {
    const auto d = rd.integer(*dim_at, rd.words(*dim_at).at(0));
    if (sides.size() == 1 && d > 1) sides.assign(d, sides.front());
    if (sides.size() != d) rd.fail(*dim_at, "dimension does not match the number of sides");
  }
  Boundary boundary = Boundary::periodic;
  if (const auto* at = rd.find("lattice", "boundary")) {
    try {
      boundary = parse_boundary(rd.words(*at).at(0));
    } catch (const std::invalid_argument& e) {
      rd.fail(*at, e.what());
    }
  }
  ec.lattice = LatticeSpec{sides, boundary};
  try {
    ec.lattice.validate();
  } catch (const std::invalid_argument& e) {
    rd.fail(rd.section_anchor("lattice"), e.what());
  }

  // distribution
  const auto* kind_at = rd.find("distribution", "kind");
  if (kind_at && rd.words(*kind_at).at(0) == "blocks") {
    ec.blocks = true;
    ec.distribution.reset();
  } else {
    ec.distribution = detail::parse_distribution(rd);
  }

  // params
  ec.mu = rd.one_number("params", "mu", 0.5);
  if (const auto* at = rd.find("params", "theta")) ec.thetas = rd.numbers(*at);

  // experiment
  const std::string ex = "experiment";
  ec.horizon = rd.one_number(ex, "horizon", ec.horizon);
  ec.events = rd.one_integer(ex, "events", ec.events);
  ec.replicas = rd.one_integer(ex, "replicas", ec.replicas);
  ec.seed = rd.one_integer(ex, "seed", ec.seed);
  ec.jobs = static_cast<unsigned>(rd.one_integer(ex, "jobs", ec.jobs));
  if (const auto* at = rd.find(ex, "percolation")) {
    auto v = rd.numbers(*at);
    if (v.size() != 1) rd.fail(*at, "expected a single percolation probability");
    ec.percolation = v[0];
  }
  ec.classify.delta = rd.one_number(ex, "delta", ec.classify.delta);
  ec.classify.quiet_fraction = rd.one_number(ex, "quiet_fraction", ec.classify.quiet_fraction);
  ec.checkpoints = rd.one_integer(ex, "checkpoints", ec.checkpoints);
  ec.ks_tolerance = rd.one_number(ex, "ks_tolerance", ec.ks_tolerance);
  cf.sad_queries = rd.one_integer(ex, "sad_queries", cf.sad_queries);
  cf.flat_window = rd.one_integer(ex, "flat_window", cf.flat_window);
  cf.probe = static_cast<VertexId>(rd.one_integer(ex, "probe", cf.probe));
  if (const auto* at = rd.find(ex, "energies")) cf.energies = rd.words(*at);
  for (auto& e : cf.energies)
    if (e != "quadratic" && e != "absolute" && e != "exponential")
      rd.fail(*rd.find(ex, "energies"), "unknown energy '" + e + "'");

  rd.reject_unused();
  try {
    ec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 1, 1, e.what());
  }
  return cf;
}

// Canonical text form; parse_config(emit_config(c)) reproduces c.
inline std::string emit_config(const ConfigFile& cf) {
  const ExperimentConfig& ec = cf.experiment;
  std::ostringstream os;
  os << "[lattice]\nsides =";
  for (auto s : ec.lattice.sides) os << ' ' << s;
  os << "\nboundary = " << to_string(ec.lattice.boundary) << "\n\n[distribution]\n";
  if (ec.blocks)
    os << "kind = blocks\n";
  else
    detail::emit_distribution(os, *ec.distribution);
  os << "\n[params]\nmu = " << detail::fmt(ec.mu) << "\ntheta = " << detail::join(ec.thetas) << "\n\n[experiment]\n";
  os << "horizon = " << detail::fmt(ec.horizon) << '\n';
  os << "events = " << ec.events << '\n';
  os << "replicas = " << ec.replicas << '\n';
  os << "seed = " << ec.seed << '\n';
  os << "jobs = " << ec.jobs << '\n';
  if (ec.percolation) os << "percolation = " << detail::fmt(*ec.percolation) << '\n';
  os << "delta = " << detail::fmt(ec.classify.delta) << '\n';
  os << "quiet_fraction = " << detail::fmt(ec.classify.quiet_fraction) << '\n';
  os << "checkpoints = " << ec.checkpoints << '\n';
  os << "ks_tolerance = " << detail::fmt(ec.ks_tolerance) << '\n';
  os << "sad_queries = " << cf.sad_queries << '\n';
  os << "flat_window = " << cf.flat_window << '\n';
  os << "probe = " << cf.probe << '\n';
  os << "energies =";
  for (auto& e : cf.energies) os << ' ' << e;
  os << '\n';
  return os.str();
}

// Hash of everything that influences results; `jobs` is excluded because
// output does not depend on it.
inline std::uint64_t config_hash(const ConfigFile& cf) {
  ConfigFile copy = cf;
  copy.experiment.jobs = 1;
  return fnv1a(emit_config(copy));
}

}  // namespace deffuant

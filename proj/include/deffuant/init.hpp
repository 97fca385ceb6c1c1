#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deffuant/distribution.hpp"
#include "deffuant/lattice.hpp"
#include "deffuant/rng.hpp"

namespace deffuant {

struct InitialField {
  std::vector<double> values;
  std::string generator;  // human-readable description of the law
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  [[nodiscard]] std::size_t size() const { return values.size(); }
};

// i.i.d. draws from `spec`, one per vertex, in vertex order. The stream index
// lets replicas share a master seed.
inline InitialField sample_iid(const DistributionSpec& spec, std::size_t vertex_count, std::uint64_t seed,
                               std::uint64_t stream = 0) {
  CounterRng rng(seed, stream, Purpose::initial_field);
  InitialField f;
  f.values.resize(vertex_count);
  for (auto& x : f.values) x = sample(spec, rng);
  f.generator = to_string(spec);
  f.seed = seed;
  f.stream = stream;
  return f;
}

inline InitialField sample_iid(const DistributionSpec& spec, const LatticeGraph& graph, std::uint64_t seed,
                               std::uint64_t stream = 0) {
  return sample_iid(spec, graph.vertex_count(), seed, stream);
}

// Dependent block field on a 1-d torus.
//
// Blocks have length 9 and are centered at offset + 9k, where the offset is
// uniform on {-4, ..., 4}. The center of each block is 1/2; the other eight
// sites all carry the block's type, 0 or 1, chosen by a fair coin per block.
struct BlockField {
  InitialField field;
  std::size_t offset = 0;         // offset reduced into [0, 9)
  std::vector<std::uint8_t> type; // per block, 0 or 1
  static constexpr std::size_t block_length = 9;

  [[nodiscard]] std::size_t block_count() const { return type.size(); }
  [[nodiscard]] std::size_t center(std::size_t k) const { return offset + block_length * k; }

  // Sites on either side of the edge separating block k from block k + 1.
  [[nodiscard]] std::pair<std::size_t, std::size_t> boundary_sites(std::size_t k) const {
    const std::size_t n = field.size();
    return {(center(k) + 4) % n, (center(k) + 5) % n};
  }
};

inline BlockField sample_blocks(const LatticeGraph& graph, std::uint64_t seed, std::uint64_t stream = 0) {
  if (graph.dimension() != 1 || graph.spec().boundary != Boundary::periodic)
    throw std::invalid_argument("block fields need a 1-dimensional torus");
  const std::size_t n = graph.vertex_count();
  if (n % BlockField::block_length != 0)
    throw std::invalid_argument("block fields need a ring length divisible by 9");
  CounterRng rng(seed, stream, Purpose::initial_field);
  const auto u = static_cast<long long>(rng.index(9)) - 4;
  BlockField b;
  b.offset = static_cast<std::size_t>(((u % 9) + 9) % 9);
  b.type.resize(n / BlockField::block_length);
  for (auto& t : b.type) t = static_cast<std::uint8_t>(rng.index(2));
  b.field.values.assign(n, 0.0);
  for (std::size_t k = 0; k < b.block_count(); ++k) {
    const std::size_t c = b.center(k);
    for (long long j = -4; j <= 4; ++j) {
      const auto site = static_cast<std::size_t>(static_cast<long long>(c + n) + j) % n;
      b.field.values[site] = j == 0 ? 0.5 : static_cast<double>(b.type[k]);
    }
  }
  b.field.generator = "blocks(9)";
  b.field.seed = seed;
  b.field.stream = stream;
  return b;
}

inline void write_field_csv(std::ostream& os, const std::vector<double>& values) {
  os << "vertex,value\n";
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, values[i], std::chars_format::general, 17);
    os << i << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
  }
}

inline std::vector<double> read_field_csv(std::istream& is) {
  std::string line;
  std::vector<double> values;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("vertex", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("field csv: missing comma");
    const auto idx = std::stoull(line.substr(0, comma));
    if (idx != values.size()) throw std::runtime_error("field csv: vertices out of order");
    double x = 0;
    const char* first = line.data() + comma + 1;
    const char* last = line.data() + line.size();
    if (std::from_chars(first, last, x).ec != std::errc{}) throw std::runtime_error("field csv: bad value");
    values.push_back(x);
  }
  return values;
}

}  // namespace deffuant

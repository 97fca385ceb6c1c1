#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace deffuant {

__extension__ using uint128 = unsigned __int128;

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// What a stream is used for. Keeps the draws of independent parts of a
// replica (initial field, percolation, dynamics) apart so that changing one
// never shifts another.
enum class Purpose : std::uint64_t {
  initial_field = 1,
  percolation = 2,
  dynamics = 3,
  queries = 4,
  test = 99,
};

/// Counter-based generator keyed by (master seed, stream index, purpose).
///
/// The n-th draw of a stream is `mix64(key + n * golden)`, so every draw is a
/// pure function of (key, n). Streams of distinct replicas use distinct keys and
/// are statistically independent for all practical purposes. All helper
/// distributions below are implemented here rather than through <random> so
/// that traces are bit-identical across standard library implementations.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  static constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ULL;

  constexpr CounterRng() noexcept : CounterRng(0, 0) {}

  constexpr CounterRng(std::uint64_t master_seed, std::uint64_t stream,
                       Purpose purpose = Purpose::dynamics) noexcept
      : key_(derive_key(master_seed, stream, purpose)) {}

  static constexpr std::uint64_t derive_key(std::uint64_t master_seed, std::uint64_t stream,
                                            Purpose purpose) noexcept {
    std::uint64_t k = mix64(master_seed ^ 0x6A09E667F3BCC909ULL);
    k = mix64(k ^ (stream * 0xD1B54A32D192ED03ULL + 0x3C6EF372FE94F82BULL));
    k = mix64(k ^ (static_cast<std::uint64_t>(purpose) * 0xABC98388FB8FAC03ULL));
    return k;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return at(counter_++); }

  // Random access into the stream; does not advance the counter.
  [[nodiscard]] constexpr result_type at(std::uint64_t index) const noexcept {
    return mix64(key_ + (index + 1) * golden);
  }

  [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

  // Uniform on the open interval (0, 1) on a grid of spacing 2^-52; both ends
  // of the grid are exactly representable, so 0 and 1 never occur.
  static constexpr double to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
  }

  double uniform() noexcept { return to_open_unit((*this)()); }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), Lemire's multiply-and-reject.
  std::uint64_t index(std::uint64_t n) noexcept {
    uint128 m = static_cast<uint128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<uint128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Exp(rate); strictly positive because uniform() never returns 1.
  double exponential(double rate) noexcept { return -std::log(uniform()) / rate; }

  // Standard normal, Marsaglia polar method (no cached spare, so the draw count
  // depends only on the acceptance loop).
  double normal() noexcept {
    for (;;) {
      const double x = 2.0 * uniform() - 1.0;
      const double y = 2.0 * uniform() - 1.0;
      const double s = x * x + y * y;
      if (s > 0.0 && s < 1.0) return x * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // Gamma(shape, 1), Marsaglia-Tsang; shapes below one draw Gamma(k + 1) and
  // multiply by U^(1/k).
  double gamma(double shape) noexcept {
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      return g * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) noexcept {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace deffuant

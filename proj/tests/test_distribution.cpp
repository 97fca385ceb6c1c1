#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "deffuant/distribution.hpp"
#include "deffuant/rng.hpp"

using namespace deffuant;

namespace {

// Brute-force descriptor of a discrete law: scan the atoms directly.
struct Brute {
  double a, b, mean, h, lo, hi;
};

Brute brute_discrete(const std::vector<double>& atoms, const std::vector<double>& w) {
  Brute r{atoms[0], atoms[0], 0, 0, 0, 0};
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    r.a = std::min(r.a, atoms[i]);
    r.b = std::max(r.b, atoms[i]);
    r.mean += w[i] * atoms[i];
  }
  double below = -INFINITY, above = INFINITY;
  for (double x : atoms) {
    if (std::abs(x - r.mean) <= 1e-12 * std::max(1.0, r.b - r.a)) return r;
    if (x < r.mean) below = std::max(below, x);
    if (x > r.mean) above = std::min(above, x);
  }
  r.lo = below;
  r.hi = above;
  r.h = above - below;
  return r;
}

// E[(c - X)^+] by midpoint quadrature of the cdf
double numeric_lower_partial(const DistributionSpec& s, double lo, double c) {
  const int n = 200000;
  double sum = 0;
  const double dx = (c - lo) / n;
  for (int i = 0; i < n; ++i) sum += cdf(s, lo + (i + 0.5) * dx);
  return sum * dx;
}

std::vector<DistributionSpec> builtin_specs() {
  return {DistributionSpec::uniform(0, 1),
          DistributionSpec::uniform(-2, 3),
          DistributionSpec::beta(2, 1),
          DistributionSpec::beta(1, 3),
          DistributionSpec::beta(0.5, 0.5),
          DistributionSpec::discrete({-0.8, -0.3, 0.7, 0.8}, {0.25, 0.25, 0.25, 0.25}),
          DistributionSpec::discrete({0, 2.0 / 3, 1}, {1.0 / 3, 0.5, 1.0 / 6}),
          DistributionSpec::union_uniform({{0, 0.125}, {0.875, 1}}),
          DistributionSpec::union_uniform({{0, 0.1}, {0.3, 0.35}, {0.9, 1}}),
          DistributionSpec::point_mass(0.3),
          DistributionSpec::mixture({DistributionSpec::point_mass(0), DistributionSpec::uniform(0.8, 1)}, {0.5, 0.5})};
}

}  // namespace

TEST(Describe, Uniform) {
  const auto d = describe(DistributionSpec::uniform(0, 1));
  EXPECT_EQ(d.a, 0);
  EXPECT_EQ(d.b, 1);
  EXPECT_EQ(d.mean, 0.5);
  EXPECT_EQ(d.gap_width, 0);
  EXPECT_TRUE(d.bounded);
}

TEST(Describe, FourAtomGap) {
  const auto d = describe(DistributionSpec::uniform_atoms({-0.8, -0.3, 0.7, 0.8}));
  EXPECT_DOUBLE_EQ(d.mean, 0.1);
  EXPECT_DOUBLE_EQ(d.gap_width, 1.0);
  EXPECT_EQ(d.gap_lo, -0.3);
  EXPECT_EQ(d.gap_hi, 0.7);
  EXPECT_TRUE(d.atom_at_gap_lo);
  EXPECT_TRUE(d.atom_at_gap_hi);
}

TEST(Describe, TwoIntervalGap) {
  const auto d = describe(DistributionSpec::union_uniform({{0, 0.125}, {0.875, 1}}));
  EXPECT_DOUBLE_EQ(d.mean, 0.5);
  EXPECT_DOUBLE_EQ(d.gap_width, 0.75);
  EXPECT_EQ(d.gap_lo, 0.125);
  EXPECT_EQ(d.gap_hi, 0.875);
  EXPECT_FALSE(d.atom_at_gap_lo);
  EXPECT_FALSE(d.atom_at_gap_hi);
}

TEST(Describe, UnboundedIsFlagged) {
  const auto d = describe(DistributionSpec::pareto(3));
  EXPECT_FALSE(d.bounded);
  EXPECT_TRUE(std::isinf(d.b));
  EXPECT_TRUE(std::isnan(d.gap_width));
  const auto t = theoretical_theta_c(d);
  EXPECT_TRUE(t.always_subcritical);
  EXPECT_TRUE(std::isinf(t.value));
  EXPECT_FALSE(describe(DistributionSpec::pareto(0.8)).bounded);
  EXPECT_TRUE(std::isinf(mean(DistributionSpec::pareto(0.8))));
  EXPECT_THROW(criticality_class(d, 1.0), std::invalid_argument);
}

TEST(Describe, MatchesBruteForceOnRandomDiscreteLaws) {
  CounterRng rng(31, 0, Purpose::test);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 1 + rng.index(20);
    std::vector<double> atoms, w;
    double total = 0;
    for (std::size_t i = 0; i < k; ++i) {
      // coarse grid so that repeated atoms and means on atoms occur
      atoms.push_back(std::round(rng.uniform(-1, 1) * 8) / 8);
      w.push_back(rng.uniform());
      total += w.back();
    }
    for (auto& x : w) x /= total;
    const auto spec = DistributionSpec::discrete(atoms, w);
    const auto* dd = spec.as<DistributionSpec::Discrete>();
    const Brute ref = brute_discrete(dd->atoms, dd->weights);
    const auto d = describe(spec);
    ASSERT_EQ(d.a, ref.a);
    ASSERT_EQ(d.b, ref.b);
    ASSERT_NEAR(d.mean, ref.mean, 1e-12);
    ASSERT_EQ(d.gap_width, ref.h);
    if (ref.h > 0) {
      ASSERT_EQ(d.gap_lo, ref.lo);
      ASSERT_EQ(d.gap_hi, ref.hi);
      ASSERT_TRUE(d.atom_at_gap_lo && d.atom_at_gap_hi);
    }
    ASSERT_LE(d.a, d.mean);
    ASSERT_LE(d.mean, d.b);
    ASSERT_LE(d.gap_width, d.b - d.a);
  }
}

TEST(ThetaC, ReferenceValues) {
  EXPECT_EQ(theoretical_theta_c(DistributionSpec::uniform(0, 1)).value, 0.5);
  EXPECT_DOUBLE_EQ(theoretical_theta_c(DistributionSpec::beta(2, 1)).value, 2.0 / 3);
  EXPECT_DOUBLE_EQ(theoretical_theta_c(DistributionSpec::beta(1, 3)).value, 0.75);
  EXPECT_DOUBLE_EQ(theoretical_theta_c(DistributionSpec::uniform_atoms({-0.8, -0.3, 0.7, 0.8})).value, 1.0);
  EXPECT_EQ(theoretical_theta_c(DistributionSpec::union_uniform({{0, 0.125}, {0.875, 1}})).value, 0.75);
}

TEST(ThetaC, BetaClosedForm) {
  for (double a : {0.5, 1.0, 2.0, 3.5})
    for (double b : {0.5, 1.0, 2.0, 7.0})
      EXPECT_DOUBLE_EQ(theoretical_theta_c(DistributionSpec::beta(a, b)).value, std::max(a, b) / (a + b));
}

TEST(ThetaC, AffineRescaling) {
  CounterRng rng(8, 0, Purpose::test);
  for (const auto& spec : builtin_specs()) {
    const double base = theoretical_theta_c(spec).value;
    for (int k = 0; k < 50; ++k) {
      const double c = rng.uniform(-5, 5);
      const double s = rng.uniform(0.1, 10);
      // (X + c) / s
      const auto moved = DistributionSpec::affine(spec, 1 / s, c / s);
      EXPECT_NEAR(theoretical_theta_c(moved).value, base / s, 1e-12 * (1 + base / s)) << to_string(spec);
      // reflection keeps the threshold
      const auto flipped = DistributionSpec::affine(spec, -1, c);
      EXPECT_NEAR(theoretical_theta_c(flipped).value, base, 1e-12 * (1 + base)) << to_string(spec);
    }
  }
}

TEST(Criticality, ClassesAroundThreshold) {
  const auto unif = describe(DistributionSpec::uniform(0, 1));
  EXPECT_EQ(criticality_class(unif, 0.4), Criticality::subcritical);
  EXPECT_EQ(criticality_class(unif, 0.6), Criticality::supercritical);
  EXPECT_EQ(criticality_class(unif, 0.5), Criticality::critical_unresolved);
}

TEST(Criticality, ThreeAtomExample) {
  // mean 1/2 sits in the gap (0, 2/3); h = 2/3 beats max{1/2, 1/2}
  const auto d = describe(DistributionSpec::discrete({0, 2.0 / 3, 1}, {1.0 / 3, 0.5, 1.0 / 6}));
  EXPECT_DOUBLE_EQ(d.mean, 0.5);
  EXPECT_EQ(d.gap_lo, 0.0);
  EXPECT_EQ(d.gap_hi, 2.0 / 3);
  EXPECT_DOUBLE_EQ(theoretical_theta_c(d).value, 2.0 / 3);
  EXPECT_EQ(criticality_class(d, 2.0 / 3), Criticality::critical_consensus);
}

TEST(Criticality, GapEndAtoms) {
  // atoms at both ends of a dominant gap
  const auto both = describe(DistributionSpec::uniform_atoms({-0.8, -0.3, 0.7, 0.8}));
  EXPECT_EQ(criticality_class(both, 1.0), Criticality::critical_consensus);
  // union of intervals: no atoms at the gap ends
  const auto none = describe(DistributionSpec::union_uniform({{0, 0.125}, {0.875, 1}}));
  EXPECT_EQ(criticality_class(none, 0.75), Criticality::critical_no_consensus);
  // atom on one side only
  const auto one = describe(DistributionSpec::mixture(
      {DistributionSpec::point_mass(0), DistributionSpec::uniform(0.9, 1)}, {0.5, 0.5}));
  EXPECT_FALSE(one.atom_at_gap_hi);
  EXPECT_TRUE(one.atom_at_gap_lo);
  EXPECT_EQ(criticality_class(one, one.gap_width), Criticality::critical_no_consensus);
}

TEST(Cdf, MatchesSampling) {
  CounterRng rng(5, 0, Purpose::test);
  for (const auto& spec : builtin_specs()) {
    std::vector<double> xs(20000);
    for (auto& x : xs) x = sample(spec, rng);
    std::sort(xs.begin(), xs.end());
    for (double q : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const double x = xs[static_cast<std::size_t>(q * xs.size())];
      EXPECT_LE(cdf_below(spec, x), q + 0.02) << to_string(spec);
      EXPECT_GE(cdf(spec, x), q - 0.02) << to_string(spec);
    }
  }
}

TEST(PartialMoments, AgreeWithQuadrature) {
  for (const auto& spec : builtin_specs()) {
    const auto d = describe(spec);
    for (double t : {0.1, 0.35, 0.5, 0.8}) {
      const double c = d.a + t * (d.b - d.a);
      const double got = lower_partial_moment(spec, c);
      EXPECT_NEAR(got, numeric_lower_partial(spec, d.a, c), 1e-5) << to_string(spec) << " c=" << c;
      EXPECT_NEAR(upper_partial_moment(spec, c) - got, d.mean - c, 1e-12);
    }
  }
  // Pareto lower partial moment, including shape 1
  for (double shape : {0.7, 1.0, 3.0}) {
    const auto p = DistributionSpec::pareto(shape, 2.0);
    EXPECT_NEAR(lower_partial_moment(p, 5.0), numeric_lower_partial(p, 2.0, 5.0), 1e-6) << shape;
  }
}

TEST(PartialMoments, ReflectedAffine) {
  const auto base = DistributionSpec::beta(2, 5);
  const auto refl = DistributionSpec::affine(base, -1, 1);  // 1 - X ~ beta(5, 2)
  const auto ref = DistributionSpec::beta(5, 2);
  for (double c : {0.2, 0.5, 0.9}) {
    EXPECT_NEAR(lower_partial_moment(refl, c), lower_partial_moment(ref, c), 1e-12);
    EXPECT_NEAR(cdf(refl, c), cdf(ref, c), 1e-12);
  }
}

TEST(Sample, StaysInSupport) {
  CounterRng rng(6, 0, Purpose::test);
  for (const auto& spec : builtin_specs()) {
    const auto d = describe(spec);
    for (int i = 0; i < 5000; ++i) {
      const double x = sample(spec, rng);
      ASSERT_GE(x, d.a);
      ASSERT_LE(x, d.b);
      if (d.gap_width > 0) {
        ASSERT_FALSE(x > d.gap_lo && x < d.gap_hi);
      }
    }
  }
}

TEST(Spec, InvalidParameters) {
  EXPECT_THROW(DistributionSpec::uniform(1, 1), std::invalid_argument);
  EXPECT_THROW(DistributionSpec::beta(0, 1), std::invalid_argument);
  EXPECT_THROW(DistributionSpec::discrete({0, 1}, {0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(DistributionSpec::union_uniform({{0, 0.5}, {0.4, 1}}), std::invalid_argument);
  EXPECT_THROW(DistributionSpec::union_uniform({{0.5, 0.5}}), std::invalid_argument);
  EXPECT_THROW(DistributionSpec::pareto(-1), std::invalid_argument);
  EXPECT_THROW(DistributionSpec::affine(DistributionSpec::uniform(0, 1), 0, 1), std::invalid_argument);
}

TEST(Spec, CenteredParetoHasMedianZero) {
  const auto s = centered_pareto(3);
  EXPECT_NEAR(cdf(s, 0.0), 0.5, 1e-15);
  EXPECT_NEAR(mean(s), 1.5 - std::cbrt(2.0), 1e-15);
}

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "nanbu/inequalities.hpp"
#include "nanbu/observables.hpp"
#include "oracles.hpp"

using namespace nanbu;

namespace {

ParticleState from_rows(const std::vector<std::vector<double>>& rows) {
  ParticleState s(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int i = 0; i < s.n; ++i)
    for (int k = 0; k < s.d; ++k) s[i][k] = rows[i][k];
  return s;
}

CoupledState independent(int n, int d, std::uint64_t seed) {
  Engine g(seed);
  CoupledState cs;
  cs.u = init_uniform(n, d, g);
  cs.v = init_uniform(n, d, g);
  return cs;
}

Matrix diag(std::vector<double> x) {
  Matrix m(static_cast<int>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = x[i];
  return m;
}

}  // namespace

TEST(CouplingDistance, IdentityAndReflection) {
  const auto cs0 = independent(40, 3, 1);
  CoupledState same{cs0.u, cs0.u};
  EXPECT_EQ(coupling_distance(same), 0.0);
  CoupledState flip{cs0.u, cs0.u};
  for (double& x : flip.v.v) x = -x;
  EXPECT_NEAR(coupling_distance(flip), 4.0, 1e-12);
}

TEST(CouplingDistance, ShapeMismatchThrows) {
  CoupledState cs{init_uniform(4, 3, std::uint64_t{1}), init_uniform(5, 3, std::uint64_t{2})};
  EXPECT_THROW(coupling_distance(cs), std::invalid_argument);
}

TEST(Creation, MatchesDirectSumAndIsNonnegative) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto cs = independent(3 + static_cast<int>(seed * 7 % 60), 3 + seed % 3, seed);
    const auto b = creation_bracket(cs);
    EXPECT_TRUE(b.exact);
    EXPECT_GE(b.value, 0.0);
    EXPECT_NEAR(b.value, oracle::bracket_direct(cs), 1e-12);
  }
}

TEST(Creation, ZeroForIdentityCoupling) {
  const auto cs0 = independent(50, 4, 3);
  EXPECT_EQ(creation_bracket(CoupledState{cs0.u, cs0.u}).value, 0.0);
}

TEST(Creation, TwoParticleClosedForm) {
  // N = 2: u₂ = −u₁, v₂ = −v₁, unit norms; bracket = 2·(1 − û·v̂).
  const auto k = AngularKernel::atoms({{1.0, 1.0}});
  const double lam = std::pow(std::sin(1.0), 2);
  for (int d = 3; d <= 6; ++d) {
    CoupledState cs{init_uniform(2, d, std::uint64_t(d)), init_uniform(2, d, std::uint64_t(d + 100))};
    const double c = dot(cs.u[0], cs.v[0]);
    EXPECT_NEAR(creation_bracket(cs).value, 2.0 * (1.0 - c), 1e-13);
    EXPECT_NEAR(coupling_creation(cs, k).value, lam * wallis_ratio(d) * 2.0 * (1.0 - c), 1e-13);
    EXPECT_NEAR(coupling_distance(cs), 2.0 - 2.0 * c, 1e-13);
  }
}

TEST(Parallelogram, ZeroWhenColinear) {
  const auto cs0 = independent(30, 3, 4);
  CoupledState cs{cs0.u, cs0.u};
  for (double& x : cs.v.v) x *= -2.5;
  EXPECT_NEAR(parallelogram(cs).value, 0.0, 1e-12);
}

TEST(Parallelogram, MatchesDirectSumAndDecomposition) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto cs = independent(4 + static_cast<int>(seed * 5 % 80), 3 + seed % 4, seed + 50);
    const double p = parallelogram(cs).value;
    EXPECT_NEAR(p, oracle::parallelogram_direct(cs), 1e-11);
    EXPECT_NEAR(p, oracle::decomposition(cs).sum(), 1e-11);
  }
}

TEST(Parallelogram, DecompositionOnStructuredSamples) {
  for (int kind = 0; kind < 5; ++kind) {
    const auto fc = fuzz_case(kind, 64, 3, 77 + kind);
    EXPECT_NEAR(parallelogram(fc.state).value, oracle::decomposition(fc.state).sum(), 1e-10) << kind;
  }
}

TEST(TraceLemma, HoldsOnRandomStates) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto fc = fuzz_case(static_cast<int>(seed), 16 + static_cast<int>(seed % 40), 3 + seed % 3, seed);
    const auto t = oracle::trace_lemma(fc.state);
    EXPECT_LE(t.lhs, t.rhs + 1e-9) << seed;
  }
}

TEST(Kappa, Examples) {
  EXPECT_NEAR(kappa(diag({1.0 / 3, 1.0 / 3, 1.0 / 3})), 1.5, 1e-12);
  EXPECT_NEAR(kappa(diag({0.25, 0.25, 0.25, 0.25})), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(kappa(diag({0.75, 0.25, 0.0})), 4.0, 1e-12);
  EXPECT_TRUE(std::isinf(kappa(diag({1.0, 0.0, 0.0}))));
}

TEST(Kappa, RankOneStateIsInfinite) {
  ParticleState s = from_rows({{1, 0, 0}, {-1, 0, 0}});
  EXPECT_TRUE(std::isinf(kappa(s)));
}

TEST(Kappa, RotationInvariant) {
  Matrix m = diag({0.6, 0.3, 0.1});
  const double c = std::cos(0.7), s = std::sin(0.7);
  Matrix r = Matrix::identity(3);
  r(0, 0) = c;
  r(0, 1) = -s;
  r(1, 0) = s;
  r(1, 1) = c;
  EXPECT_NEAR(kappa(r * m * r.transposed()), 2.5, 1e-12);
}

TEST(Kappa, AsymmetricInputThrows) {
  Matrix m = diag({0.5, 0.3, 0.2});
  m(0, 1) = 0.1;
  EXPECT_THROW(spectral_radius(m), AsymmetricMatrix);
}

TEST(Kappa, SpectralRadiusMatchesPowerIteration) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto cs = independent(12, 5, seed + 900);
    EXPECT_NEAR(spectral_radius(covariance(cs.u)), oracle::top_eigenvalue(oracle::cov(cs.u, cs.u)), 1e-10);
  }
}

TEST(FFunc, SymmetricAboutTwo) {
  for (double x = 0.0; x <= 2.0; x += 0.125) EXPECT_NEAR(f_func(x), f_func(4.0 - x), 1e-15);
  EXPECT_DOUBLE_EQ(f_func(2.0), 1.0);
  EXPECT_DOUBLE_EQ(f_func(0.0), 0.0);
}

TEST(PMoment, TwoParticles) {
  const ParticleState s = init_uniform(2, 3, std::uint64_t{5});
  // ⟨|x−x*|^p⟩ = 2^p/2, so m_p = 2^{1−1/p}.
  for (double p : {1.0, 2.0, 3.0, 4.5}) EXPECT_NEAR(p_moment(s, p), std::pow(2.0, 1.0 - 1.0 / p), 1e-13);
  EXPECT_NEAR(p_moment(s, 2.0), std::sqrt(2.0), 1e-13);
}

TEST(PMoment, SecondMomentIsTwoForNormalizedStates) {
  const ParticleState s = init_uniform(77, 4, std::uint64_t{6});
  EXPECT_NEAR(p_moment_power(s, 2.0).value, 2.0, 1e-12);
}

TEST(PMoment, LyapunovMonotone) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ParticleState s = init_uniform(40, 3, seed);
    const double ps[] = {1.0, 1.5, 2.0, 3.0, 4.0, 6.0};
    const auto m = p_moments(s, ps);
    for (std::size_t k = 0; k + 1 < m.size(); ++k) EXPECT_LE(m[k], m[k + 1] + 1e-12);
    for (std::size_t k = 0; k < m.size(); ++k) EXPECT_NEAR(m[k], p_moment(s, ps[k]), 1e-12);
  }
}

TEST(PMoment, RejectsSmallP) { EXPECT_THROW(p_moment(init_uniform(4, 3, std::uint64_t{1}), 0.5), std::invalid_argument); }

TEST(ModifiedMoment, MatchesManualAverage) {
  std::vector<ParticleState> xs;
  double acc = 0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    xs.push_back(init_uniform(20, 3, r));
    acc += std::pow(kappa(xs.back()), 2.0) * p_moment_power(xs.back(), 3.0).value;
  }
  const auto mm = modified_moment(xs, 2.0, 3.0);
  EXPECT_NEAR(mm.value, std::pow(2.0 / 3.0, 2.0 / 3.0) * std::cbrt(acc / 10), 1e-12);
  EXPECT_GT(mm.std_error, 0.0);
  ParticleState line(20, 3);
  for (int i = 0; i < 20; ++i) line[i][0] = i % 2 ? -1.0 : 1.0;
  xs.push_back(line);
  EXPECT_TRUE(std::isinf(modified_moment(xs, 2.0, 3.0).value));
}

TEST(HolderConstant, Limits) {
  EXPECT_NEAR(holder_constant(1e-9), 1.0, 1e-8);
  EXPECT_NEAR(holder_constant(1e9), 2.0, 1e-7);
  EXPECT_NEAR(holder_constant(1.0), 2.0 * std::pow(2.0 / 3.0, 1.5), 1e-15);
  double prev = 1.0;
  for (double a : {0.1, 0.5, 1.0, 2.0, 5.0, 50.0}) {
    EXPECT_GT(holder_constant(a), prev);
    EXPECT_LT(holder_constant(a), 2.0);
    prev = holder_constant(a);
  }
  EXPECT_THROW(holder_constant(0.0), std::invalid_argument);
}

TEST(HolderConstant, IsMaximumOfItsProfile) {
  // k_α = max over c in [−1,1] of (1−c)(1+c)^{1/q}, q = 1+α.
  for (double a : {0.3, 1.0, 4.0}) {
    const double q = 1.0 + a;
    double best = 0.0;
    for (int i = 0; i <= 200000; ++i) {
      const double c = -1.0 + 2.0 * i / 200000.0;
      best = std::max(best, (1.0 - c) * std::pow(1.0 + c, 1.0 / q));
    }
    EXPECT_NEAR(holder_constant(a), best, 1e-9);
  }
}

TEST(FundIneq, HoldsOnFuzzedStates) {
  for (int i = 0; i < 100; ++i) {
    const auto fc = fuzz_case(i, 32 + i % 33, 3 + i % 3, 1000 + i);
    const auto c = fund_ineq_check(fc.state);
    EXPECT_TRUE(c.holds) << i;
    EXPECT_TRUE(c.holds_sharp) << i;
    EXPECT_NEAR(c.rhs_sharp, 0.5 * c.rhs, 1e-15);
  }
}

TEST(FundIneq, IdentityIsTrivial) {
  const auto cs0 = independent(20, 3, 8);
  const auto c = fund_ineq_check(CoupledState{cs0.u, cs0.u});
  EXPECT_EQ(c.lhs, 0.0);
  EXPECT_NEAR(c.parallelogram, 0.0, 1e-15);
  EXPECT_TRUE(c.holds_sharp);
}

TEST(HolderIneq, HoldsOnFuzzedStates) {
  for (int i = 0; i < 60; ++i) {
    const auto fc = fuzz_case(i, 32, 3, 2000 + i);
    for (double a : {0.5, 1.0, 2.0})
      for (double p1 : {1.5, 2.0, 3.0}) EXPECT_TRUE(holder_check(fc.state, a, p1).holds) << i << ' ' << a << ' ' << p1;
  }
}

TEST(HolderIneq, RejectsBadExponent) {
  EXPECT_THROW(holder_check(independent(8, 3, 1), 1.0, 1.0), std::invalid_argument);
}

TEST(Wasserstein, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto cs = independent(2 + static_cast<int>(seed % 7), 3, seed + 300);
    EXPECT_NEAR(wasserstein2_empirical(cs.u, cs.v), oracle::w2_bruteforce(cs.u, cs.v), 1e-12) << seed;
  }
}

TEST(Wasserstein, PermutationInvariantAndBoundedByCoupling) {
  const auto cs = independent(60, 3, 9);
  ParticleState shuffled(60, 3);
  for (int i = 0; i < 60; ++i)
    for (int k = 0; k < 3; ++k) shuffled[i][k] = cs.u[(i * 7) % 60][k];
  EXPECT_NEAR(wasserstein2_empirical(cs.u, shuffled), 0.0, 1e-12);
  EXPECT_LE(wasserstein2_empirical(cs.u, cs.v), coupling_distance(cs) + 1e-12);
}

TEST(Wasserstein, Errors) {
  EXPECT_THROW(wasserstein2_empirical(init_uniform(4, 3, std::uint64_t{1}), init_uniform(5, 3, std::uint64_t{1})),
               SizeMismatch);
  EXPECT_THROW(wasserstein2_empirical(init_uniform(20, 3, std::uint64_t{1}), init_uniform(20, 3, std::uint64_t{2}), 10),
               TooLarge);
}

TEST(PairSums, SubsamplingAgreesWithExact) {
  const auto cs = independent(300, 3, 10);
  PairPolicy exact;
  PairPolicy sampled;
  sampled.exact_max = 10;
  sampled.sparse_budget = 0;
  sampled.samples = 400000;
  const auto a = coupled_pair_stats(cs, exact);
  const auto b = coupled_pair_stats(cs, sampled);
  EXPECT_TRUE(a.bracket.exact);
  EXPECT_FALSE(b.bracket.exact);
  EXPECT_NEAR(b.bracket.value, a.bracket.value, 4 * b.bracket.std_error);
  EXPECT_NEAR(b.parallelogram.value, a.parallelogram.value, 4 * b.parallelogram.std_error);
  EXPECT_NEAR(p_moment_power(cs.u, 3.0, sampled).value, p_moment_power(cs.u, 3.0, exact).value,
              4 * p_moment_power(cs.u, 3.0, sampled).std_error);
}

TEST(PairSums, SparsePathIsExact) {
  // Only a few particles differ between u and v: the sparse sum must agree
  // with the full one.
  const auto base = independent(500, 3, 11);
  CoupledState cs{base.u, base.u};
  for (int i : {3, 77, 140, 141, 499})
    for (int k = 0; k < 3; ++k) cs.v[i][k] = base.v[i][k];
  const auto sparse = coupled_pair_stats(cs);
  EXPECT_NEAR(sparse.bracket.value, oracle::bracket_direct(cs), 1e-13);
  EXPECT_NEAR(sparse.parallelogram.value, oracle::parallelogram_direct(cs), 1e-13);
}

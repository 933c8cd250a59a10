#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nanbu/geometry.hpp"
#include "oracles.hpp"

using namespace nanbu;

namespace {

constexpr double kPi = std::numbers::pi;

class GeometryTest : public ::testing::Test {
 protected:
  Engine g{20240611};

  UnitVector random_unit(int d) { return UnitVector(uniform_direction(d, g)); }

  /// Unit vector at squared distance `dist2` from n.
  UnitVector at_distance(const UnitVector& n, double dist2) {
    const double c = 1.0 - 0.5 * dist2;
    const Vec w = detail::orthogonal_direction(n.vec(), nullptr, g);
    return UnitVector(c * n.vec() + std::sqrt(1.0 - c * c) * w);
  }
};

struct MeanVar {
  double sum = 0, sum2 = 0;
  int n = 0;
  void add(double x) {
    sum += x;
    sum2 += x * x;
    ++n;
  }
  double mean() const { return sum / n; }
  double se() const { return std::sqrt((sum2 / n - mean() * mean()) / (n - 1)); }
};

}  // namespace

TEST(Wallis, BaseCases) {
  EXPECT_DOUBLE_EQ(wallis(0), kPi / 2);
  EXPECT_DOUBLE_EQ(wallis(1), 1.0);
  EXPECT_NEAR(wallis(4), 3 * kPi / 16, 1e-15);
}

TEST(Wallis, MatchesQuadrature) {
  for (int d = 0; d <= 12; ++d) {
    const double q = oracle::simpson([d](double t) { return std::pow(std::sin(t), d); }, 0, kPi / 2);
    EXPECT_NEAR(wallis(d), q, 1e-12) << "d=" << d;
  }
}

TEST(Wallis, RatioClosedForm) {
  for (int d = 3; d <= 16; ++d) EXPECT_NEAR(wallis_ratio(d), (d - 2.0) / (d - 1.0), 1e-14);
  const double c2 = oracle::simpson([](double t) { return std::pow(std::sin(t), 2); }, 0, kPi / 2);
  const double c0 = kPi / 2;
  EXPECT_NEAR(wallis_ratio(3), c2 / c0, 1e-12);
  const double c3 = oracle::simpson([](double t) { return std::pow(std::sin(t), 3); }, 0, kPi / 2);
  EXPECT_NEAR(wallis_ratio(4), c3 / 1.0, 1e-12);
}

TEST(Wallis, RatioIncreasesToOne) {
  for (int d = 3; d < 200; ++d) EXPECT_LT(wallis_ratio(d), wallis_ratio(d + 1));
  EXPECT_NEAR(wallis_ratio(10000), 1.0, 1e-3);
}

TEST(Wallis, RejectsLowDimension) {
  EXPECT_THROW(wallis_ratio(2), DimensionError);
  EXPECT_THROW(UnitVector(Vec{1.0, 0.0}), DimensionError);
}

TEST_F(GeometryTest, UnitVectorIsNormalized) {
  const UnitVector n(Vec{3.0, 4.0, 12.0});
  EXPECT_NEAR(norm(n), 1.0, 1e-15);
  EXPECT_THROW(UnitVector(Vec(3)), std::invalid_argument);
}

TEST_F(GeometryTest, AzimuthIsUniformInThreeDimensions) {
  const UnitVector a(Vec::basis(3, 0)), b(Vec::basis(3, 1));
  MeanVar phi, phi2;
  for (int i = 0; i < 100000; ++i) {
    const auto s = sample_azimuthal(a, b, g);
    ASSERT_GE(s.phi, 0.0);
    ASSERT_LE(s.phi, kPi);
    ASSERT_NEAR(std::abs(s.l[2]), 1.0, 1e-12);
    phi.add(s.phi);
    phi2.add(s.phi * s.phi);
  }
  EXPECT_NEAR(phi.mean(), kPi / 2, 3 * phi.se());
  EXPECT_NEAR(phi2.mean(), kPi * kPi / 3, 3 * phi2.se());
}

TEST_F(GeometryTest, AzimuthSecondMomentMatchesWallisRatio) {
  for (int d : {4, 5, 7}) {
    const UnitVector a(Vec::basis(d, 0)), b(Vec::basis(d, 1));
    MeanVar s2;
    for (int i = 0; i < 100000; ++i) {
      const double s = std::sin(sample_azimuthal(a, b, g).phi);
      s2.add(s * s);
    }
    const double c_hi = oracle::simpson([d](double t) { return std::pow(std::sin(t), d - 1); }, 0, kPi / 2);
    const double c_lo = oracle::simpson([d](double t) { return std::pow(std::sin(t), d - 3); }, 0, kPi / 2);
    EXPECT_NEAR(s2.mean(), c_hi / c_lo, 4 * s2.se()) << "d=" << d;
    if (d == 5) {
      EXPECT_NEAR(c_hi / c_lo, 0.75, 1e-12);
    }
  }
}

TEST_F(GeometryTest, AzimuthNormalIsOrthogonalAndCentered) {
  for (int d : {3, 4, 6}) {
    const UnitVector a = random_unit(d);
    const UnitVector b(detail::orthogonal_direction(a.vec(), nullptr, g));
    std::vector<MeanVar> comp(d);
    for (int i = 0; i < 100000; ++i) {
      const auto s = sample_azimuthal(a, b, g);
      ASSERT_NEAR(dot(s.l, a), 0.0, 1e-10);
      ASSERT_NEAR(dot(s.l, b), 0.0, 1e-10);
      for (int k = 0; k < d; ++k) comp[k].add(s.l[k]);
    }
    for (int k = 0; k < d; ++k) EXPECT_NEAR(comp[k].mean(), 0.0, 3.5 * comp[k].se() + 1e-12) << "d=" << d;
  }
}

TEST_F(GeometryTest, AzimuthRejectsSkewFrame) {
  const UnitVector a(Vec{1, 0, 0}), b(Vec{1, 1, 0});
  EXPECT_THROW(sample_azimuthal(a, b, g), std::invalid_argument);
}

TEST_F(GeometryTest, IsotropicStepEndpoints) {
  const UnitVector n = random_unit(5);
  const UnitVector same = isotropic_step(n, 0.0, g);
  const UnitVector flip = isotropic_step(n, kPi, g);
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(same[k], n[k], 1e-15);
    EXPECT_NEAR(flip[k], -n[k], 1e-15);
  }
}

TEST_F(GeometryTest, IsotropicStepKeepsScatteringAngle) {
  std::uniform_real_distribution<double> angle(0.0, kPi);
  for (int i = 0; i < 20000; ++i) {
    const int d = 3 + i % 6;
    const UnitVector n = random_unit(d);
    const double theta = angle(g);
    const UnitVector np = isotropic_step(n, theta, g);
    ASSERT_NEAR(dot(n, np), std::cos(theta), 1e-12);
    ASSERT_NEAR(norm(np), 1.0, 1e-14);
  }
}

TEST_F(GeometryTest, IsotropicStepMeanIsCosThetaN) {
  const UnitVector n(Vec::basis(3, 2));
  std::vector<MeanVar> comp(3);
  for (int i = 0; i < 100000; ++i) {
    const UnitVector np = isotropic_step(n, kPi / 2, g);
    for (int k = 0; k < 3; ++k) comp[k].add(np[k]);
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(comp[k].mean(), 0.0, 3 * comp[k].se() + 1e-12);
}

TEST_F(GeometryTest, IsotropicStepIsReversible) {
  // With n uniform, (n, n') is exchangeable: n·e₁ and n'·e₁ share their law.
  MeanVar a2, b2, a4, b4;
  const Vec e1 = Vec::basis(4, 0);
  for (int i = 0; i < 100000; ++i) {
    const UnitVector n = random_unit(4);
    const UnitVector np = isotropic_step(n, 1.1, g);
    const double x = dot(n, e1), y = dot(np, e1);
    a2.add(x * x);
    b2.add(y * y);
    a4.add(std::pow(x, 4));
    b4.add(std::pow(y, 4));
  }
  EXPECT_NEAR(a2.mean() - b2.mean(), 0.0, 3 * std::hypot(a2.se(), b2.se()));
  EXPECT_NEAR(a4.mean() - b4.mean(), 0.0, 3 * std::hypot(a4.se(), b4.se()));
  EXPECT_NEAR(b2.mean(), 0.25, 3 * b2.se());
}

TEST(ElementaryRotation, IdentityWhenEqual) {
  const UnitVector a(Vec{0.3, -0.2, 0.9, 0.1});
  const Vec x{1.0, 2.0, 3.0, 4.0};
  const Vec y = elementary_rotation_apply(a, a, x);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(y[k], x[k]);
}

TEST(ElementaryRotation, QuarterTurn) {
  const UnitVector e1(Vec::basis(3, 0)), e2(Vec::basis(3, 1));
  const Vec y = elementary_rotation_apply(e1, e2, Vec::basis(3, 1));
  EXPECT_NEAR(y[0], -1.0, 1e-15);
  EXPECT_NEAR(y[1], 0.0, 1e-15);
  EXPECT_NEAR(y[2], 0.0, 1e-15);
  const Vec z = elementary_rotation_apply(e1, e2, Vec::basis(3, 0));
  EXPECT_NEAR(z[1], 1.0, 1e-15);
}

TEST_F(GeometryTest, RotationFixesComplementAndIsIsometry) {
  for (int i = 0; i < 2000; ++i) {
    const int d = 3 + i % 5;
    const UnitVector a = random_unit(d), b = random_unit(d);
    Vec x = gaussian_vec(d, g);
    const Vec ra = elementary_rotation_apply(a, b, a.vec());
    for (int k = 0; k < d; ++k) ASSERT_NEAR(ra[k], b[k], 1e-12);
    const Vec rx = elementary_rotation_apply(a, b, x);
    ASSERT_NEAR(norm(rx), norm(x), 1e-12);
    // Project x onto Span(a,b)^⊥.
    const Vec m = detail::orthonormalize_against(b.vec(), a.vec());
    Vec perp = x;
    perp -= dot(x, a) * a.vec();
    perp -= dot(perp, m) * m;
    const Vec rp = elementary_rotation_apply(a, b, perp);
    for (int k = 0; k < d; ++k) ASSERT_NEAR(rp[k], perp[k], 1e-12);
  }
}

TEST(ElementaryRotation, AntipodalThrows) {
  const UnitVector a(Vec{0, 0, 1}), b(Vec{0, 0, -1});
  EXPECT_THROW(elementary_rotation_apply(a, b, Vec{1, 0, 0}), AntipodalError);
}

TEST_F(GeometryTest, CoupleDirectionsBasics) {
  const UnitVector e1(Vec::basis(3, 0)), e2(Vec::basis(3, 1));
  const UnitVector out = couple_directions(e1, e2, e2, g);
  EXPECT_NEAR(out[0], -1.0, 1e-15);
  for (int i = 0; i < 1000; ++i) {
    const UnitVector n = random_unit(4), np = random_unit(4);
    const UnitVector same = couple_directions(n, n, np, g);
    for (int k = 0; k < 4; ++k) ASSERT_NEAR(same[k], np[k], 1e-15);
  }
}

TEST_F(GeometryTest, CoupleDirectionsRoundTrip) {
  for (int i = 0; i < 5000; ++i) {
    const int d = 3 + i % 4;
    const UnitVector nu = random_unit(d), nv = random_unit(d), np = random_unit(d);
    const UnitVector there = couple_directions(nu, nv, np, g);
    const UnitVector back = couple_directions(nv, nu, there, g);
    for (int k = 0; k < d; ++k) ASSERT_NEAR(back[k], np[k], 1e-11);
  }
}

TEST_F(GeometryTest, CoupleDirectionsAntipodalMapsNuToNv) {
  const UnitVector nu = random_unit(5);
  const UnitVector nv(-nu.vec());
  const UnitVector out = couple_directions(nu, nv, nu, g);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(out[k], nv[k], 1e-12);
  const UnitVector np = isotropic_step(nu, 0.7, g);
  const UnitVector w = couple_directions(nu, nv, np, g);
  EXPECT_NEAR(dot(w, nv), std::cos(0.7), 1e-12);
}

TEST_F(GeometryTest, CoupledStepZeroAngleIsIdentity) {
  const UnitVector nu = random_unit(4), nv = random_unit(4);
  const CoupledStep s = coupled_step(nu, nv, 0.0, g);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(s.n_u[k], nu[k], 1e-15);
    EXPECT_NEAR(s.n_v[k], nv[k], 1e-15);
  }
}

TEST_F(GeometryTest, CoupledStepPathwiseIdentity) {
  std::uniform_real_distribution<double> angle(0.0, kPi);
  for (int i = 0; i < 50000; ++i) {
    const int d = 3 + i % 6;
    const UnitVector nu = random_unit(d);
    UnitVector nv = random_unit(d);
    if (i % 50 == 0) nv = nu;
    if (i % 50 == 1) nv = UnitVector(-nu.vec());
    const double theta = angle(g);
    const CoupledStep s = coupled_step(nu, nv, theta, g);
    ASSERT_NEAR(dot(s.n_u, nu), std::cos(theta), 1e-10);
    ASSERT_NEAR(dot(s.n_v, nv), std::cos(theta), 1e-10);
    const double before = dist2(nu, nv);
    const double after = dist2(s.n_u, s.n_v);
    const double sp = std::sin(theta) * std::sin(s.phi);
    ASSERT_NEAR(after, (1.0 - sp * sp) * before, 1e-10) << "d=" << d << " i=" << i;
    ASSERT_LE(after, before + 1e-12);
  }
}

TEST_F(GeometryTest, CoupledStepAverageContraction) {
  const UnitVector nu(Vec::basis(3, 0));
  const UnitVector nv = at_distance(nu, 1.0);
  ASSERT_NEAR(dist2(nu, nv), 1.0, 1e-14);
  MeanVar single;
  for (int i = 0; i < 100000; ++i) {
    const CoupledStep s = coupled_step(nu, nv, kPi / 3, g);
    single.add(dist2(s.n_u, s.n_v));
  }
  EXPECT_NEAR(single.mean(), 5.0 / 8.0, 3 * single.se());
}

TEST_F(GeometryTest, CoupledStepMarginalsAreIsotropicSteps) {
  // Each output, the other held fixed, has E n' = cosθ·n and
  // E n'⊗n' = cos²θ n⊗n + sin²θ (Id − n⊗n)/(d−1).
  for (int branch = 0; branch < 3; ++branch) {
    const int d = 4;
    const double theta = 1.0;
    const UnitVector nu = random_unit(d);
    const UnitVector nv = branch == 0 ? random_unit(d) : branch == 1 ? nu : UnitVector(-nu.vec());
    std::vector<MeanVar> mean_v(d), second_v(d * d);
    for (int i = 0; i < 100000; ++i) {
      const CoupledStep s = coupled_step(nu, nv, theta, g);
      for (int p = 0; p < d; ++p) {
        mean_v[p].add(s.n_v[p]);
        for (int q = 0; q < d; ++q) second_v[p * d + q].add(s.n_v[p] * s.n_v[q]);
      }
    }
    const double c = std::cos(theta), s2 = std::pow(std::sin(theta), 2);
    for (int p = 0; p < d; ++p) {
      EXPECT_NEAR(mean_v[p].mean(), c * nv[p], 3.5 * mean_v[p].se()) << "branch " << branch;
      for (int q = 0; q < d; ++q) {
        const double expect = c * c * nv[p] * nv[q] + s2 * ((p == q ? 1.0 : 0.0) - nv[p] * nv[q]) / (d - 1);
        EXPECT_NEAR(second_v[p * d + q].mean(), expect, 3.5 * second_v[p * d + q].se() + 1e-12)
            << "branch " << branch;
      }
    }
  }
}

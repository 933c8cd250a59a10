#pragma once

// Geometry on S^{d-1}: Wallis integrals, isotropic steps with a prescribed
// scattering angle, and the parallel-transport (spherical) coupling of two
// collisional directions.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "nanbu/linalg.hpp"
#include "nanbu/random.hpp"

namespace nanbu {

/// Thrown when a rotation taking a to b is requested with a = −b.
class AntipodalError : public std::domain_error {
 public:
  AntipodalError() : std::domain_error("antipodal directions: rotation carrying a to b is not unique") {}
};

class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(int d)
      : std::invalid_argument("dimension must be >= 3 (got " + std::to_string(d) + ")") {}
};

inline void require_dim(int d) {
  if (d < 3 || d > kMaxDim) throw DimensionError(d);
}

/// Gate for the n_u = −n_v branch: 1 + n_u·n_v at or below this is antipodal.
inline constexpr double kAntipodalTol = 1e-12;

/// A point on the unit sphere. Construction renormalizes.
class UnitVector {
 public:
  explicit UnitVector(const Vec& v) : v_(v) {
    require_dim(v.dim());
    const double r = norm(v_);
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("cannot normalize a zero vector");
    v_ *= 1.0 / r;
  }

  int dim() const { return v_.dim(); }
  const Vec& vec() const { return v_; }
  double operator[](int i) const { return v_[i]; }
  operator std::span<const double>() const { return v_.span(); }

 private:
  Vec v_;
};

// ---------------------------------------------------------------------------
// Wallis integrals

/// c_d = ∫_0^{π/2} sin^d φ dφ.
inline double wallis(int d) {
  if (d < 0) throw std::invalid_argument("wallis: d must be >= 0");
  double even = std::numbers::pi / 2.0;  // c_0
  double odd = 1.0;                      // c_1
  if (d == 0) return even;
  if (d == 1) return odd;
  double c = 0.0;
  for (int k = 2; k <= d; ++k) {
    if (k % 2 == 0) {
      even *= static_cast<double>(k - 1) / k;
      c = even;
    } else {
      odd *= static_cast<double>(k - 1) / k;
      c = odd;
    }
  }
  return c;
}

/// c_{d−1}/c_{d−3}, the mean of sin²φ under the azimuthal law. Equals (d−2)/(d−1).
inline double wallis_ratio(int d) {
  if (d < 3) throw DimensionError(d);
  return wallis(d - 1) / wallis(d - 3);
}

// ---------------------------------------------------------------------------
// Sampling

struct AzimuthalSample {
  double phi;
  UnitVector l;
};

namespace detail {

/// Gaussian draw with its components along `a` and `b` removed, normalized.
/// `b` may be null.
template <std::uniform_random_bit_generator G>
Vec orthogonal_direction(const Vec& a, const Vec* b, G& g) {
  const int d = a.dim();
  for (;;) {
    Vec x = gaussian_vec(d, g);
    x -= dot(x, a) * a;
    if (b) x -= dot(x, *b) * (*b);
    const double r = norm(x);
    if (r >= 1e-8) return x * (1.0 / r);
  }
}

inline Vec orthonormalize_against(Vec x, const Vec& a) {
  x -= dot(x, a) * a;
  const double r = norm(x);
  return x * (1.0 / r);
}

}  // namespace detail

/// Draws φ with density sin^{d−3}φ/(2c_{d−3}) on [0,π] and l uniform on the
/// unit sphere of Span(a,b)^⊥.
template <std::uniform_random_bit_generator G>
AzimuthalSample sample_azimuthal(const UnitVector& a, const UnitVector& b, G& g) {
  const int d = a.dim();
  require_dim(d);
  if (b.dim() != d) throw std::invalid_argument("sample_azimuthal: frame dimension mismatch");
  if (std::abs(dot(a, b)) > 1e-10) throw std::invalid_argument("sample_azimuthal: frame is not orthonormal");

  const double half = 0.5 * (d - 2);
  const double x = beta_sample(half, half, g);
  const double phi = std::acos(std::clamp(1.0 - 2.0 * x, -1.0, 1.0));
  Vec l = detail::orthogonal_direction(a.vec(), &b.vec(), g);
  return {phi, UnitVector(l)};
}

/// n' = cosθ·n + sinθ·w with w uniform on the unit sphere of n^⊥.
template <std::uniform_random_bit_generator G>
UnitVector isotropic_step(const UnitVector& n, double theta, G& g) {
  const Vec w = detail::orthogonal_direction(n.vec(), nullptr, g);
  return UnitVector(std::cos(theta) * n.vec() + std::sin(theta) * w);
}

/// Applies the rotation that fixes Span(a,b)^⊥ pointwise and maps a to b.
inline Vec elementary_rotation_apply(const UnitVector& a, const UnitVector& b, std::span<const double> x) {
  const double c = dot(a, b);
  if (1.0 + c <= kAntipodalTol) throw AntipodalError();
  Vec m = b.vec() - c * a.vec();
  const double s = norm(m);
  Vec out(x);
  if (s == 0.0) return out;
  m *= 1.0 / s;
  const double xa = dot(x, a);
  const double xm = dot(x, m);
  out += (xa * (c - 1.0) - xm * s) * a.vec();
  out += (xa * s + xm * (c - 1.0)) * m;
  return out;
}

/// Coupl_{n_u,n_v}(n'_u). In the antipodal case a uniform σ picks the plane
/// Span(n_u,σ) and the half-turn in that plane is used.
template <std::uniform_random_bit_generator G>
UnitVector couple_directions(const UnitVector& n_u, const UnitVector& n_v, const UnitVector& n_u_prime, G& g) {
  if (1.0 + dot(n_u, n_v) > kAntipodalTol) {
    return UnitVector(elementary_rotation_apply(n_u, n_v, n_u_prime));
  }
  const Vec m = detail::orthogonal_direction(n_u.vec(), nullptr, g);
  Vec x = n_u_prime.vec();
  x -= 2.0 * dot(n_u_prime, n_u) * n_u.vec();
  x -= 2.0 * dot(n_u_prime, m) * m;
  return UnitVector(x);
}

struct CoupledStep {
  UnitVector n_u;
  UnitVector n_v;
  double phi;
};

/// Spherically coupled pair of post-collisional directions with shared
/// scattering angle θ, azimuth φ and normal l.
template <std::uniform_random_bit_generator G>
CoupledStep coupled_step(const UnitVector& n_u, const UnitVector& n_v, double theta, G& g) {
  const int d = n_u.dim();
  require_dim(d);
  const double c = dot(n_u, n_v);

  Vec m_u(d), m_v(d);
  if (1.0 + c <= kAntipodalTol) {
    // Half-turn in Span(n_u, σ): m_v = −m_u.
    m_u = detail::orthogonal_direction(n_u.vec(), nullptr, g);
    m_v = -m_u;
  } else {
    Vec t = n_v.vec() - c * n_u.vec();
    const double s = norm(t);
    if (s <= 1e-14) {
      m_u = detail::orthogonal_direction(n_u.vec(), nullptr, g);
      m_v = detail::orthonormalize_against(m_u, n_v.vec());
    } else {
      m_u = detail::orthonormalize_against(t * (1.0 / s), n_u.vec());
      m_v = detail::orthonormalize_against(c * m_u - s * n_u.vec(), n_v.vec());
    }
  }

  const AzimuthalSample az = sample_azimuthal(n_u, UnitVector(m_u), g);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(az.phi), sp = std::sin(az.phi);
  const Vec& l = az.l.vec();
  UnitVector out_u(ct * n_u.vec() + (st * cp) * m_u + (st * sp) * l);
  const auto su = n_u.vec().span(), sv = n_v.vec().span();
  if (std::equal(su.begin(), su.end(), sv.begin(), sv.end())) return {out_u, out_u, az.phi};
  UnitVector out_v(ct * n_v.vec() + (st * cp) * m_v + (st * sp) * l);
  return {out_u, out_v, az.phi};
}

}  // namespace nanbu

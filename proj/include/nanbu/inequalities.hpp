#pragma once

// Structured and adversarial coupled states: equality-case builds for the
// parallelogram inequality and the two degeneracy counterexamples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "nanbu/geometry.hpp"
#include "nanbu/linalg.hpp"
#include "nanbu/observables.hpp"
#include "nanbu/particle_system.hpp"
#include "nanbu/random.hpp"

namespace nanbu {

class EmptyConditioningSet : public std::runtime_error {
 public:
  EmptyConditioningSet(double lo, double hi)
      : std::runtime_error("no particle with |u| in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                           "]; retry with a larger N") {}
};

enum class SampleKind { independent, identity, colinear_isotropic, heavy_tail, radial_perturbation };

struct CoupledSampleSpec {
  SampleKind kind = SampleKind::independent;
  int n = 64;
  int d = 3;
  std::uint64_t seed = 0;
  /// heavy_tail: tail radius R > 1.
  double r_tail = 2.0;
  /// radial_perturbation: band [r_minus, r_plus] on |u|.
  double r_minus = 1.0;
  double r_plus = 1.5;
  /// colinear_isotropic: |v| ∝ |u|^gamma before renormalization.
  double gamma = 2.0;
  /// colinear_isotropic: place u on randomly rotated ±e_k frames so that every
  /// radial reweighting keeps the covariances exactly isotropic.
  bool isotropic_frames = true;
  /// radial_perturbation: radii at Gaussian-norm quantiles (antithetic pairs)
  /// instead of i.i.d. draws.
  bool stratified = true;
};

inline void validate(const CoupledSampleSpec& s) {
  if (s.n < 2) throw std::invalid_argument("sample spec: N must be >= 2");
  require_dim(s.d);
  if (s.kind == SampleKind::heavy_tail && !(s.r_tail > 1.0)) throw std::invalid_argument("heavy_tail: R must be > 1");
  if (s.kind == SampleKind::radial_perturbation && !(s.r_minus > 0.0 && s.r_minus < s.r_plus))
    throw std::invalid_argument("radial_perturbation: need 0 < r_minus < r_plus");
  if (s.kind == SampleKind::colinear_isotropic && s.isotropic_frames && s.n < 2 * s.d)
    throw std::invalid_argument("colinear_isotropic: frames need N >= 2d");
}

namespace detail {

/// Random orthonormal frame (columns of a Haar-distributed rotation).
template <std::uniform_random_bit_generator G>
std::vector<Vec> random_frame(int d, G& g) {
  std::vector<Vec> e;
  while (static_cast<int>(e.size()) < d) {
    Vec x = gaussian_vec(d, g);
    for (const Vec& b : e) x -= dot(x, b) * b;
    const double r = norm(x);
    if (r > 1e-8) e.push_back(x * (1.0 / r));
  }
  return e;
}

/// Scales a centered state to unit energy without re-centering.
inline void scale_to_unit_energy(ParticleState& s) {
  const double e = mean_energy(s);
  const double k = 1.0 / std::sqrt(e);
  for (double& x : s.v) x *= k;
}

/// u on rotated cross-polytopes: groups of 2d particles ±ρ·e_k, ρ = χ_d/√d.
/// Leftover particles (N mod 2d) sit at the origin.
template <std::uniform_random_bit_generator G>
ParticleState frame_state(int n, int d, G& g) {
  ParticleState s(n, d);
  const int groups = n / (2 * d);
  std::chi_squared_distribution<double> chi2(d);
  for (int k = 0; k < groups; ++k) {
    const double rho = std::sqrt(chi2(g) / d);
    const std::vector<Vec> e = random_frame(d, g);
    for (int a = 0; a < d; ++a)
      for (int sign = 0; sign < 2; ++sign) {
        auto row = s[2 * d * k + 2 * a + sign];
        const double c = sign == 0 ? rho : -rho;
        for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = c * e[static_cast<std::size_t>(a)][j];
      }
  }
  scale_to_unit_energy(s);
  return s;
}

/// Gaussian-norm quantiles r_k = sqrt(Q_{χ²_d}((k+½)/M)/d), k < M.
inline std::vector<double> stratified_radii(int m, int d) {
  std::vector<double> r(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    const double p = (k + 0.5) / m;
    r[static_cast<std::size_t>(k)] = std::sqrt(2.0 * boost::math::gamma_p_inv(0.5 * d, p) / d);
  }
  return r;
}

}  // namespace detail

/// Base u-marginal of the radial counterexample: Gaussian-like radii, uniform
/// directions, antithetic pairs (u_{2k+1} = −u_{2k}), unit energy.
template <std::uniform_random_bit_generator G>
ParticleState radial_base(int n, int d, bool stratified, G& g, const std::vector<double>* radii = nullptr) {
  ParticleState u(n, d);
  const int m = n / 2;
  std::vector<double> own;
  if (stratified && !radii) {
    own = detail::stratified_radii(m, d);
    radii = &own;
  }
  std::chi_squared_distribution<double> chi2(d);
  for (int k = 0; k < m; ++k) {
    const double r = stratified ? (*radii)[static_cast<std::size_t>(k)] : std::sqrt(chi2(g) / d);
    const Vec th = uniform_direction(d, g);
    auto a = u[2 * k], b = u[2 * k + 1];
    for (int j = 0; j < d; ++j) {
      a[static_cast<std::size_t>(j)] = r * th[j];
      b[static_cast<std::size_t>(j)] = -r * th[j];
    }
  }
  detail::scale_to_unit_energy(u);
  return u;
}

/// v colinear with u: |v| = |u| outside the band, band RMS inside.
inline ParticleState radial_band(const ParticleState& u, double r_minus, double r_plus) {
  ParticleState v = u;
  double s2 = 0.0;
  std::vector<int> band;
  for (int i = 0; i < u.n; ++i) {
    const double r = norm(u[i]);
    if (r >= r_minus && r <= r_plus) {
      band.push_back(i);
      s2 += r * r;
    }
  }
  if (band.empty()) throw EmptyConditioningSet(r_minus, r_plus);
  const double rho = std::sqrt(s2 / static_cast<double>(band.size()));
  for (int i : band) {
    const double k = rho / norm(u[i]);
    for (double& x : v[i]) x *= k;
  }
  return v;
}

template <std::uniform_random_bit_generator G>
ParticleState heavy_tail_marginal(int n, int d, double r_tail, G& g) {
  ParticleState v(n, d);
  const int k = std::max(1, static_cast<int>(std::lround(n / (r_tail * r_tail))));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), g);
  for (int t = 0; t < std::min(k, n); ++t) {
    const Vec th = uniform_direction(d, g);
    auto row = v[idx[static_cast<std::size_t>(t)]];
    for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = r_tail * th[j];
  }
  renormalize(v);
  return v;
}

inline CoupledState build(const CoupledSampleSpec& spec) {
  validate(spec);
  Engine g(derive_seed(spec.seed, 0, 0xb111d));
  CoupledState cs;
  switch (spec.kind) {
    case SampleKind::independent:
      cs.u = init_uniform(spec.n, spec.d, g);
      cs.v = init_uniform(spec.n, spec.d, g);
      break;
    case SampleKind::identity:
      cs.u = init_uniform(spec.n, spec.d, g);
      cs.v = cs.u;
      break;
    case SampleKind::colinear_isotropic: {
      cs.u = spec.isotropic_frames ? detail::frame_state(spec.n, spec.d, g) : init_uniform(spec.n, spec.d, g);
      cs.v = cs.u;
      for (int i = 0; i < spec.n; ++i) {
        const double r = norm(cs.u[i]);
        if (r == 0.0) continue;
        const double k = std::pow(r, spec.gamma - 1.0);
        for (double& x : cs.v[i]) x *= k;
      }
      if (spec.isotropic_frames) {
        detail::scale_to_unit_energy(cs.v);
      } else {
        renormalize(cs.v);
      }
      break;
    }
    case SampleKind::heavy_tail:
      cs.u = init_uniform(spec.n, spec.d, g);
      cs.v = heavy_tail_marginal(spec.n, spec.d, spec.r_tail, g);
      break;
    case SampleKind::radial_perturbation:
      cs.u = radial_base(spec.n, spec.d, spec.stratified, g);
      cs.v = radial_band(cs.u, spec.r_minus, spec.r_plus);
      break;
  }
  return cs;
}

struct FuzzCase {
  SampleKind kind;
  CoupledState state;
};

/// Randomized build for inequality fuzzing; kinds cycle with `index`.
inline FuzzCase fuzz_case(int index, int n, int d, std::uint64_t seed) {
  Engine g(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  CoupledSampleSpec s;
  s.kind = static_cast<SampleKind>(index % 5);
  s.n = n;
  s.d = d;
  s.seed = g();
  switch (s.kind) {
    case SampleKind::colinear_isotropic:
      s.gamma = -2.0 + 6.0 * unif(g);
      s.isotropic_frames = n >= 2 * d && unif(g) < 0.5;
      break;
    case SampleKind::heavy_tail:
      s.r_tail = 1.2 + 8.8 * unif(g);
      break;
    case SampleKind::radial_perturbation:
      s.stratified = unif(g) < 0.5;
      s.r_minus = 0.3 + 1.2 * unif(g);
      s.r_plus = s.r_minus + 0.05 + unif(g);
      break;
    default:
      break;
  }
  for (;;) {
    try {
      return {s.kind, build(s)};
    } catch (const EmptyConditioningSet&) {
      s.r_minus *= 0.5;
      s.r_plus *= 2.0;
    }
  }
}

// ---------------------------------------------------------------------------
// Counterexample tables

/// a/b with 0/0 reported as NaN.
inline double safe_ratio(double a, double b) {
  if (b == 0.0) return a == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  return a / b;
}

struct CounterexampleRow {
  double param1 = 0.0;  // R, or r−
  double param2 = 0.0;  // q, or r+
  double m_q = 0.0, m_q_se = 0.0;
  double distance = 0.0, distance_se = 0.0;  // E|U−V|²
  double bracket = 0.0, bracket_se = 0.0;    // E⟨|Δu||Δv| − Δu·Δv⟩_N
  double ratio = 0.0, ratio_se = 0.0;        // f(E|U−V|²)/E bracket
  std::size_t replicas = 0;
};

struct CounterexampleOptions {
  int n = 4096;
  int d = 3;
  std::size_t replicas = 16;
  std::uint64_t seed = 1;
  double q = 1.0;  // heavy_tail moment order
  bool stratified = true;
  PairPolicy pairs{};
};

namespace detail {

struct Running {
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  void add(double x) {
    ++k;
    const double delta = x - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (x - mean);
  }
  double se() const { return k > 1 ? std::sqrt(m2 / static_cast<double>(k - 1) / static_cast<double>(k)) : 0.0; }
};

struct RowAccumulator {
  Running m, dist, br;
  std::vector<std::pair<double, double>> pairs;  // (distance, bracket) per replica

  void add(double mq, const CoupledState& cs, const PairPolicy& policy) {
    const double dd = coupling_distance(cs);
    const double b = coupled_pair_stats(cs, policy).bracket.value;
    m.add(mq);
    dist.add(dd);
    br.add(b);
    pairs.emplace_back(dd, b);
  }

  CounterexampleRow finish(double p1, double p2) const {
    CounterexampleRow r;
    r.param1 = p1;
    r.param2 = p2;
    r.m_q = m.mean;
    r.m_q_se = m.se();
    r.distance = dist.mean;
    r.distance_se = dist.se();
    r.bracket = br.mean;
    r.bracket_se = br.se();
    r.replicas = dist.k;
    r.ratio = safe_ratio(f_func(r.distance), r.bracket);
    // Delta method on g(D, B) = f(D)/B with per-replica covariance.
    if (std::isfinite(r.ratio) && dist.k > 1) {
      const double gd = (1.0 - 0.5 * r.distance) / r.bracket;
      const double gb = -r.ratio / r.bracket;
      double cov = 0.0;
      for (const auto& [dd, b] : pairs) cov += (dd - dist.mean) * (b - br.mean);
      cov /= static_cast<double>(dist.k - 1);
      const double var_d = dist.m2 / static_cast<double>(dist.k - 1);
      const double var_b = br.m2 / static_cast<double>(dist.k - 1);
      const double var = (gd * gd * var_d + gb * gb * var_b + 2.0 * gd * gb * cov) / static_cast<double>(dist.k);
      r.ratio_se = std::sqrt(std::max(0.0, var));
    }
    return r;
  }
};

}  // namespace detail

/// Row for a single coupled state (no replicas): ratio = f(⟨|u−v|²⟩)/bracket.
inline CounterexampleRow counterexample_row(const CoupledState& cs, double p1 = 0.0, double p2 = 0.0,
                                            const PairPolicy& policy = {}) {
  detail::RowAccumulator acc;
  acc.add(0.0, cs, policy);
  return acc.finish(p1, p2);
}

/// heavy_tail table over R: (R, q, m_q of V, E|U−V|², E bracket, ratio).
inline std::vector<CounterexampleRow> heavy_tail_report(const std::vector<double>& r_grid,
                                                        const CounterexampleOptions& o) {
  std::vector<CounterexampleRow> rows;
  for (std::size_t gi = 0; gi < r_grid.size(); ++gi) {
    detail::RowAccumulator acc;
    for (std::size_t rep = 0; rep < o.replicas; ++rep) {
      CoupledSampleSpec spec;
      spec.kind = SampleKind::heavy_tail;
      spec.n = o.n;
      spec.d = o.d;
      spec.r_tail = r_grid[gi];
      spec.seed = derive_seed(o.seed, rep, 0x4ea7 + gi);
      const CoupledState cs = build(spec);
      acc.add(p_moment(cs.v, o.q, o.pairs), cs, o.pairs);
    }
    rows.push_back(acc.finish(r_grid[gi], o.q));
  }
  return rows;
}

/// Radial table over bands [r−, r+]. Every band of a replica shares one u.
/// The m_q column holds the fraction of particles inside the band.
inline std::vector<CounterexampleRow> radial_report(const std::vector<std::pair<double, double>>& bands,
                                                    const CounterexampleOptions& o) {
  for (const auto& [lo, hi] : bands)
    if (!(lo > 0.0 && lo < hi)) throw std::invalid_argument("radial_report: need 0 < r_minus < r_plus");
  std::vector<detail::RowAccumulator> acc(bands.size());
  const std::vector<double> radii = o.stratified ? detail::stratified_radii(o.n / 2, o.d) : std::vector<double>{};
  for (std::size_t rep = 0; rep < o.replicas; ++rep) {
    Engine g(derive_seed(o.seed, rep, 0x4ad1a1));
    CoupledState cs;
    cs.u = radial_base(o.n, o.d, o.stratified, g, o.stratified ? &radii : nullptr);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      cs.v = radial_band(cs.u, bands[b].first, bands[b].second);
      std::size_t inside = 0;
      for (int i = 0; i < cs.u.n; ++i) {
        const double r = norm(cs.u[i]);
        inside += (r >= bands[b].first && r <= bands[b].second) ? 1 : 0;
      }
      acc[b].add(static_cast<double>(inside) / cs.u.n, cs, o.pairs);
    }
  }
  std::vector<CounterexampleRow> rows;
  for (std::size_t b = 0; b < bands.size(); ++b) rows.push_back(acc[b].finish(bands[b].first, bands[b].second));
  return rows;
}

}  // namespace nanbu

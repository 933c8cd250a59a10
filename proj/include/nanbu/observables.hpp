#pragma once

// Functionals of particle states and coupled states.
//
// Double particle averages ⟨o⟩_N run over all N² ordered pairs, diagonal
// included (it contributes zero for every functional here). Sums are exact
// up to N = 4096; beyond that they are estimated from uniformly subsampled
// pairs. For coupled states the pair terms vanish whenever both particles of
// the pair are already coupled (u = v), so when few particles differ the
// exact sum only has to visit pairs touching that set.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "nanbu/geometry.hpp"
#include "nanbu/kernels.hpp"
#include "nanbu/linalg.hpp"
#include "nanbu/particle_system.hpp"
#include "nanbu/random.hpp"

namespace nanbu {

struct PairAverage {
  double value = 0.0;
  double std_error = 0.0;  // 0 when exact
  bool exact = true;
};

struct PairPolicy {
  int exact_max = 4096;
  /// Budget of pair visits for the sparse exact path (|D|·N).
  std::uint64_t sparse_budget = std::uint64_t{1} << 28;
  std::uint64_t samples = 1'000'000;
  std::uint64_t seed = 0x9a1fb2d3c4e5f607ULL;
};

/// Averages K symmetric pair functionals at once. `g(i, j)` returns
/// std::array<double, K> and must satisfy g(i,j) = g(j,i), g(i,i) = 0.
template <std::size_t K, class F>
std::array<PairAverage, K> pair_averages(int n, F&& g, const PairPolicy& policy = {}) {
  std::array<PairAverage, K> out{};
  const double nn = static_cast<double>(n) * n;
  if (n <= policy.exact_max) {
    std::array<double, K> s{};
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const auto r = g(i, j);
        for (std::size_t k = 0; k < K; ++k) s[k] += r[k];
      }
    for (std::size_t k = 0; k < K; ++k) out[k] = {2.0 * s[k] / nn, 0.0, true};
    return out;
  }
  Engine eng(policy.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::array<double, K> mean{}, m2{};
  for (std::uint64_t t = 0; t < policy.samples; ++t) {
    const int i = pick(eng), j = pick(eng);
    std::array<double, K> r{};
    if (i != j) r = g(i, j);
    const double w = 1.0 / static_cast<double>(t + 1);
    for (std::size_t k = 0; k < K; ++k) {
      const double delta = r[k] - mean[k];
      mean[k] += delta * w;
      m2[k] += delta * (r[k] - mean[k]);
    }
  }
  const double ns = static_cast<double>(policy.samples);
  for (std::size_t k = 0; k < K; ++k) out[k] = {mean[k], std::sqrt(m2[k] / (ns - 1.0) / ns), false};
  return out;
}

/// Exact averages when g(i,j) = 0 unless i or j lies in `active`.
template <std::size_t K, class F>
std::array<PairAverage, K> pair_averages_sparse(int n, std::span<const int> active, F&& g) {
  std::vector<char> in(static_cast<std::size_t>(n), 0);
  for (int i : active) in[static_cast<std::size_t>(i)] = 1;
  std::array<double, K> s{};
  for (int i : active)
    for (int j = 0; j < n; ++j) {
      if (j == i || (in[static_cast<std::size_t>(j)] && j < i)) continue;
      const auto r = g(i, j);
      for (std::size_t k = 0; k < K; ++k) s[k] += r[k];
    }
  std::array<PairAverage, K> out{};
  const double nn = static_cast<double>(n) * n;
  for (std::size_t k = 0; k < K; ++k) out[k] = {2.0 * s[k] / nn, 0.0, true};
  return out;
}

inline void require_same_shape(const CoupledState& cs) {
  if (cs.u.n != cs.v.n || cs.u.d != cs.v.d) throw std::invalid_argument("coupled marginals differ in shape");
}

// ---------------------------------------------------------------------------
// Coupling functionals

/// ⟨|u−v|²⟩_N.
inline double coupling_distance(const CoupledState& cs) {
  require_same_shape(cs);
  double s = 0.0;
  for (int i = 0; i < cs.u.n; ++i) s += dist2(cs.u[i], cs.v[i]);
  return s / cs.u.n;
}

inline double f_func(double x) { return x - 0.25 * x * x; }

struct CoupledPairStats {
  PairAverage bracket;        // ⟨|Δu||Δv| − Δu·Δv⟩_N
  PairAverage parallelogram;  // ⟨|Δu|²|Δv|² − (Δu·Δv)²⟩_N
};

/// Both coupled pair functionals in one pass.
inline CoupledPairStats coupled_pair_stats(const CoupledState& cs, const PairPolicy& policy = {}) {
  require_same_shape(cs);
  const int n = cs.u.n;
  const int d = cs.u.d;
  auto g = [&](int i, int j) {
    const auto ui = cs.u[i], uj = cs.u[j], vi = cs.v[i], vj = cs.v[j];
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (int k = 0; k < d; ++k) {
      const double a = ui[static_cast<std::size_t>(k)] - uj[static_cast<std::size_t>(k)];
      const double b = vi[static_cast<std::size_t>(k)] - vj[static_cast<std::size_t>(k)];
      uu += a * a;
      vv += b * b;
      uv += a * b;
    }
    const double prod = uu * vv;
    return std::array<double, 2>{std::max(0.0, std::sqrt(prod) - uv), std::max(0.0, prod - uv * uv)};
  };

  std::vector<int> active;
  for (int i = 0; i < n; ++i)
    if (dist2(cs.u[i], cs.v[i]) > 0.0) active.push_back(i);
  const std::uint64_t sparse_cost = static_cast<std::uint64_t>(active.size()) * static_cast<std::uint64_t>(n);
  std::array<PairAverage, 2> r;
  if (active.empty()) {
    r = {};
  } else if (2 * sparse_cost < static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n) ||
             (n > policy.exact_max && sparse_cost <= policy.sparse_budget)) {
    r = pair_averages_sparse<2>(n, active, g);
  } else {
    r = pair_averages<2>(n, g, policy);
  }
  return {r[0], r[1]};
}

/// ⟨|u−u*||v−v*| − (u−u*)·(v−v*)⟩_N.
inline PairAverage creation_bracket(const CoupledState& cs, const PairPolicy& policy = {}) {
  return coupled_pair_stats(cs, policy).bracket;
}

/// λ·(c_{d−1}/c_{d−3})·⟨|u−u*||v−v*| − (u−u*)·(v−v*)⟩_N; the prefactor
/// multiplies the whole bracket.
inline PairAverage coupling_creation(const CoupledState& cs, const AngularKernel& kernel, const PairPolicy& policy = {}) {
  PairAverage b = creation_bracket(cs, policy);
  const double c = kernel.levy_intensity() * wallis_ratio(cs.u.d);
  return {c * b.value, c * b.std_error, b.exact};
}

inline PairAverage parallelogram(const CoupledState& cs, const PairPolicy& policy = {}) {
  return coupled_pair_stats(cs, policy).parallelogram;
}

// ---------------------------------------------------------------------------
// Covariances and condition numbers

/// ⟨a⊗b⟩_N.
inline Matrix cross_covariance(const ParticleState& a, const ParticleState& b) {
  if (a.n != b.n || a.d != b.d) throw std::invalid_argument("cross_covariance: shape mismatch");
  Matrix c(a.d);
  for (int i = 0; i < a.n; ++i) {
    const auto x = a[i], y = b[i];
    for (int p = 0; p < a.d; ++p)
      for (int q = 0; q < a.d; ++q) c(p, q) += x[static_cast<std::size_t>(p)] * y[static_cast<std::size_t>(q)];
  }
  for (int p = 0; p < a.d; ++p)
    for (int q = 0; q < a.d; ++q) c(p, q) /= a.n;
  return c;
}

inline Matrix covariance(const ParticleState& s) { return cross_covariance(s, s); }
inline Matrix cross_covariance(const CoupledState& cs) { return cross_covariance(cs.u, cs.v); }

class AsymmetricMatrix : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Largest eigenvalue of a symmetric nonnegative matrix.
inline double spectral_radius(const Matrix& s) {
  if (s.asymmetry() > 1e-12) throw AsymmetricMatrix("spectral_radius: matrix is not symmetric");
  const EigenDecomposition e = jacobi_eigen(s, 1e-13);
  return std::max(0.0, e.values.front());
}

/// κ = 1/(1−‖S‖), +∞ once ‖S‖ ≥ 1 − 1e-13.
inline double kappa(const Matrix& s) {
  const double r = spectral_radius(s);
  if (r >= 1.0 - 1e-13) return std::numeric_limits<double>::infinity();
  return 1.0 / (1.0 - r);
}

inline double kappa(const ParticleState& s) { return kappa(covariance(s)); }

// ---------------------------------------------------------------------------
// Moments

/// m_{x,p} = ⟨|x−x*|^p⟩_N^{1/p}.
inline PairAverage p_moment_power(const ParticleState& s, double p, const PairPolicy& policy = {}) {
  if (!(p >= 1.0)) throw std::invalid_argument("p_moment: p must be >= 1");
  if (p == 2.0) {
    const Vec m = mean_velocity(s);
    return {std::max(0.0, 2.0 * mean_energy(s) - 2.0 * norm2(m)), 0.0, true};
  }
  auto g = [&](int i, int j) { return std::array<double, 1>{std::pow(dist2(s[i], s[j]), 0.5 * p)}; };
  return pair_averages<1>(s.n, g, policy)[0];
}

inline double p_moment(const ParticleState& s, double p, const PairPolicy& policy = {}) {
  return std::pow(p_moment_power(s, p, policy).value, 1.0 / p);
}

/// Several m_{x,p} from one pass over the pairs.
inline std::vector<double> p_moments(const ParticleState& s, std::span<const double> ps, const PairPolicy& policy = {}) {
  for (double p : ps)
    if (!(p >= 1.0)) throw std::invalid_argument("p_moment: p must be >= 1");
  std::vector<double> acc(ps.size(), 0.0);
  const double nn = static_cast<double>(s.n) * s.n;
  if (s.n <= policy.exact_max) {
    for (int i = 0; i < s.n; ++i)
      for (int j = i + 1; j < s.n; ++j) {
        const double r2 = dist2(s[i], s[j]);
        const double lr = r2 > 0.0 ? 0.5 * std::log(r2) : -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < ps.size(); ++k) acc[k] += std::exp(ps[k] * lr);
      }
    for (std::size_t k = 0; k < ps.size(); ++k) acc[k] = std::pow(2.0 * acc[k] / nn, 1.0 / ps[k]);
    return acc;
  }
  for (std::size_t k = 0; k < ps.size(); ++k) acc[k] = p_moment(s, ps[k], policy);
  return acc;
}

struct ModifiedMoment {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t replicas = 0;
  std::size_t infinite = 0;  // replicas with κ = +∞
};

/// m̃_{p0,p} = ((d−1)/d)^{p0/p}·E(κ^{p0}·⟨|X−X*|^p⟩_N)^{1/p}, error by the delta method.
inline ModifiedMoment modified_moment(std::span<const ParticleState> samples, double p0, double p,
                                      const PairPolicy& policy = {}) {
  if (samples.empty()) throw std::invalid_argument("modified_moment: no samples");
  if (!(p0 >= 1.0) || !(p >= 1.0)) throw std::invalid_argument("modified_moment: p0 and p must be >= 1");
  const int d = samples.front().d;
  ModifiedMoment out;
  out.replicas = samples.size();
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (const ParticleState& s : samples) {
    const double kap = kappa(s);
    if (!std::isfinite(kap)) {
      ++out.infinite;
      continue;
    }
    const double y = std::pow(kap, p0) * p_moment_power(s, p, policy).value;
    ++k;
    const double delta = y - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (y - mean);
  }
  if (out.infinite > 0) {
    out.value = std::numeric_limits<double>::infinity();
    out.std_error = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double pref = std::pow((d - 1.0) / d, p0 / p);
  const double se_y = k > 1 ? std::sqrt(m2 / static_cast<double>(k - 1) / static_cast<double>(k)) : 0.0;
  out.value = pref * std::pow(mean, 1.0 / p);
  out.std_error = pref * (1.0 / p) * std::pow(mean, 1.0 / p - 1.0) * se_y;
  return out;
}

/// k_α = (1+α)·(2/(2+α))^{(2+α)/(1+α)}.
inline double holder_constant(double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("holder_constant: alpha must be > 0");
  return (1.0 + alpha) * std::pow(2.0 / (2.0 + alpha), (2.0 + alpha) / (1.0 + alpha));
}

// ---------------------------------------------------------------------------
// Inequality checks

struct FundIneqCheck {
  double lhs = 0.0;            // f(⟨|u−v|²⟩_N)
  double parallelogram = 0.0;  // ⟨|Δu|²|Δv|² − (Δu·Δv)²⟩_N
  double kappa_min = 0.0;
  double rhs = 0.0;        // κ·parallelogram
  double rhs_sharp = 0.0;  // (κ/2)·parallelogram
  bool holds = true;
  bool holds_sharp = true;
  double rel_gap_sharp = 0.0;  // (rhs_sharp − lhs)/rhs_sharp
};

inline FundIneqCheck fund_ineq_check(const CoupledState& cs, const PairPolicy& policy = {}, double rel_tol = 1e-10) {
  FundIneqCheck c;
  c.lhs = f_func(coupling_distance(cs));
  c.parallelogram = coupled_pair_stats(cs, policy).parallelogram.value;
  c.kappa_min = std::min(kappa(cs.u), kappa(cs.v));
  c.rhs = c.kappa_min * c.parallelogram;
  c.rhs_sharp = 0.5 * c.rhs;
  const double slack = rel_tol * std::max(1.0, std::abs(c.lhs));
  c.holds = c.lhs <= c.rhs + slack;
  c.holds_sharp = c.lhs <= c.rhs_sharp + slack;
  c.rel_gap_sharp = c.rhs_sharp > 0.0 ? (c.rhs_sharp - c.lhs) / c.rhs_sharp : (c.lhs == 0.0 ? 0.0 : -1.0);
  return c;
}

struct HolderCheck {
  double lhs = 0.0;  // f(D)/⟨A₋⟩^{α/(1+α)}
  double rhs = 0.0;  // k_α·κ·m_u^{e}·m_v^{e}, e = (2+α)/(1+α)
  bool holds = true;
};

/// Hölder-type bound with conjugate exponents p1, p2 = p1/(p1−1).
inline HolderCheck holder_check(const CoupledState& cs, double alpha, double p1, const PairPolicy& policy = {},
                                double rel_tol = 1e-10) {
  if (!(p1 > 1.0)) throw std::invalid_argument("holder_check: p1 must be > 1");
  const double p2 = p1 / (p1 - 1.0);
  const double e = (2.0 + alpha) / (1.0 + alpha);
  HolderCheck h;
  const double dist = coupling_distance(cs);
  const double bracket = coupled_pair_stats(cs, policy).bracket.value;
  const double fd = f_func(dist);
  if (bracket > 0.0) {
    h.lhs = fd / std::pow(bracket, alpha / (1.0 + alpha));
  } else {
    h.lhs = fd > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  const double kap = std::min(kappa(cs.u), kappa(cs.v));
  const double mu = p_moment(cs.u, p1 * (2.0 + alpha), policy);
  const double mv = p_moment(cs.v, p2 * (2.0 + alpha), policy);
  h.rhs = holder_constant(alpha) * kap * std::pow(mu, e) * std::pow(mv, e);
  h.holds = h.lhs <= h.rhs * (1.0 + rel_tol);
  return h;
}

// ---------------------------------------------------------------------------
// Empirical Wasserstein-2

class SizeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TooLarge : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Minimum-cost perfect matching on a dense n×n cost matrix (row-major).
/// Returns assignment[row] = column. O(n³) shortest augmenting paths.
inline std::vector<int> hungarian(const std::vector<double>& cost, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assignment;
}

/// min over permutations σ of ⟨|a − b_σ|²⟩_N.
inline double wasserstein2_empirical(const ParticleState& a, const ParticleState& b, int max_n = 512) {
  if (a.n != b.n || a.d != b.d) throw SizeMismatch("wasserstein2_empirical: states differ in size");
  if (a.n > max_n) throw TooLarge("wasserstein2_empirical: N exceeds the configured limit");
  const int n = a.n;
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost[static_cast<std::size_t>(i) * n + j] = dist2(a[i], b[j]);
  const std::vector<int> sigma = hungarian(cost, n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += cost[static_cast<std::size_t>(i) * n + sigma[static_cast<std::size_t>(i)]];
  return s / n;
}

}  // namespace nanbu

#pragma once

// The conservative Nanbu N-particle system and its spherically coupled twin.
//
// Evolution is event-driven: every ordered pair (n,m) in [0,N)² carries a
// clock of rate b̄_ε/N, so events arrive at total rate N·b̄_ε and the pair is
// uniform over all N² ordered pairs. Diagonal draws are kept as no-ops so the
// jump law matches the generator (1/N)·Σ_{n,m} L^{(n,m)} exactly.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "nanbu/geometry.hpp"
#include "nanbu/kernels.hpp"
#include "nanbu/linalg.hpp"
#include "nanbu/random.hpp"

namespace nanbu {

class InvariantDrift : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParticleState {
  int n = 0;
  int d = 0;
  std::vector<double> v;  // n×d, row per particle
  double time = 0.0;

  ParticleState() = default;
  ParticleState(int n_particles, int dim) : n(n_particles), d(dim), v(static_cast<std::size_t>(n_particles) * dim, 0.0) {}

  std::span<double> operator[](int i) { return {v.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)}; }
  std::span<const double> operator[](int i) const {
    return {v.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
  }
};

struct CoupledState {
  ParticleState u;
  ParticleState v;
};

struct ConservationResidual {
  double momentum = 0.0;  // max_k |⟨v_k⟩_N|
  double energy = 0.0;    // |⟨|v|²⟩_N − 1|
  double max() const { return std::max(momentum, energy); }
};

inline Vec mean_velocity(const ParticleState& s) {
  Vec m(s.d);
  for (int i = 0; i < s.n; ++i)
    for (int k = 0; k < s.d; ++k) m[k] += s[i][static_cast<std::size_t>(k)];
  return m * (1.0 / s.n);
}

inline double mean_energy(const ParticleState& s) {
  double e = 0.0;
  for (int i = 0; i < s.n; ++i) e += norm2(s[i]);
  return e / s.n;
}

inline ConservationResidual conservation_residual(const ParticleState& s) {
  ConservationResidual r;
  const Vec m = mean_velocity(s);
  for (int k = 0; k < s.d; ++k) r.momentum = std::max(r.momentum, std::abs(m[k]));
  r.energy = std::abs(mean_energy(s) - 1.0);
  return r;
}

/// Projects onto ⟨v⟩_N = 0, ⟨|v|²⟩_N = 1. Returns false if the centered state is zero.
inline bool renormalize(ParticleState& s) {
  const Vec m = mean_velocity(s);
  for (int i = 0; i < s.n; ++i)
    for (int k = 0; k < s.d; ++k) s[i][static_cast<std::size_t>(k)] -= m[k];
  const double e = mean_energy(s);
  if (!(e > 1e-300)) return false;
  const double scale = 1.0 / std::sqrt(e);
  for (double& x : s.v) x *= scale;
  return true;
}

/// Exact draw from the uniform law on the conservation sphere.
template <std::uniform_random_bit_generator G>
ParticleState init_uniform(int n, int d, G& g) {
  if (n < 2) throw std::invalid_argument("init_uniform: N must be >= 2");
  require_dim(d);
  std::normal_distribution<double> nd(0.0, 1.0);
  ParticleState s(n, d);
  do {
    for (double& x : s.v) x = nd(g);
  } while (!renormalize(s));
  return s;
}

inline ParticleState init_uniform(int n, int d, std::uint64_t seed) {
  Engine g(seed);
  return init_uniform(n, d, g);
}

// ---------------------------------------------------------------------------
// Two-body collisions

struct PostCollision {
  Vec v;
  Vec v_star;
};

/// v' = ½(v+v*) + ½|v−v*|n', v*' = ½(v+v*) − ½|v−v*|n'. Identity when v = v*.
inline PostCollision collide_pair(std::span<const double> v, std::span<const double> v_star, const UnitVector& n_prime) {
  const double rel = std::sqrt(dist2(v, v_star));
  if (rel == 0.0) return {Vec(v), Vec(v_star)};
  const int d = static_cast<int>(v.size());
  PostCollision out{Vec(d), Vec(d)};
  for (int k = 0; k < d; ++k) {
    const double s = 0.5 * (v[static_cast<std::size_t>(k)] + v_star[static_cast<std::size_t>(k)]);
    const double h = 0.5 * rel * n_prime[k];
    out.v[k] = s + h;
    out.v_star[k] = s - h;
  }
  return out;
}

struct CoupledCollision {
  Vec u, u_star, v, v_star;
  double phi;  // NaN when the collision was not spherically coupled
};

/// Coupled collision with shared θ and shared (φ, l). When exactly one pair is
/// degenerate (zero relative velocity) the other pair takes an uncoupled
/// isotropic step; when both are, nothing moves.
template <std::uniform_random_bit_generator G>
CoupledCollision coupled_collide(std::span<const double> u, std::span<const double> u_star, std::span<const double> v,
                                 std::span<const double> v_star, double theta, G& g) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool du = dist2(u, u_star) == 0.0;
  const bool dv = dist2(v, v_star) == 0.0;
  if (du && dv) return {Vec(u), Vec(u_star), Vec(v), Vec(v_star), nan};
  if (du) {
    const UnitVector np = isotropic_step(UnitVector(diff(v, v_star)), theta, g);
    auto pv = collide_pair(v, v_star, np);
    return {Vec(u), Vec(u_star), pv.v, pv.v_star, nan};
  }
  if (dv) {
    const UnitVector np = isotropic_step(UnitVector(diff(u, u_star)), theta, g);
    auto pu = collide_pair(u, u_star, np);
    return {pu.v, pu.v_star, Vec(v), Vec(v_star), nan};
  }
  const UnitVector n_u(diff(u, u_star));
  const UnitVector n_v(diff(v, v_star));
  const CoupledStep step = coupled_step(n_u, n_v, theta, g);
  auto pu = collide_pair(u, u_star, step.n_u);
  auto pv = collide_pair(v, v_star, step.n_v);
  return {pu.v, pu.v_star, pv.v, pv.v_star, step.phi};
}

// ---------------------------------------------------------------------------
// Time evolution

struct CollisionEvent {
  double time;
  int n;
  int m;
  double theta;
  double phi;  // NaN for uncoupled runs and no-op events
};

struct RunOptions {
  double t_end = 0.0;
  /// Record grid spacing; 0 records only at the start and at t_end.
  double record_dt = 0.0;
  /// Also record after every k-th event (0 disables).
  std::uint64_t record_every = 0;
  /// Stop after this many events even if t_end is not reached.
  std::uint64_t max_events = std::numeric_limits<std::uint64_t>::max();
  /// Coupled runs: check the coupling distance is nonincreasing at every jump.
  bool check_monotone = true;
  /// Re-project onto the conservation sphere at record times.
  bool renormalize = false;
  double drift_tol = 1e-6;
};

struct RunStats {
  std::uint64_t events = 0;
  std::uint64_t diagonal_events = 0;
  std::uint64_t monotone_violations = 0;
  double max_monotone_excess = 0.0;  // largest per-jump increase of Σ|u−v|² seen
  double max_drift = 0.0;            // largest conservation residual seen at record times
  std::uint64_t records = 0;
};

/// Uniform ordered pair in [0,N)².
struct UniformPairs {
  template <std::uniform_random_bit_generator G>
  std::pair<int, int> operator()(int n, G& g) const {
    std::uniform_int_distribution<int> pick(0, n - 1);
    const int a = pick(g);
    const int b = pick(g);
    return {a, b};
  }
};

struct NoEvents {
  void operator()(const CollisionEvent&) const {}
};

namespace detail {

inline std::vector<double> record_times(double t0, double t_end, double dt) {
  std::vector<double> ts{t0};
  if (dt > 0.0) {
    for (std::uint64_t k = 1;; ++k) {
      const double t = t0 + static_cast<double>(k) * dt;
      if (t > t_end * (1.0 + 1e-14) + 1e-300) break;
      ts.push_back(std::min(t, t_end));
    }
  }
  if (t_end > ts.back()) ts.push_back(t_end);
  return ts;
}

inline void check_drift(const ParticleState& s, const RunOptions& o, RunStats& stats, const char* which) {
  const ConservationResidual r = conservation_residual(s);
  stats.max_drift = std::max(stats.max_drift, r.max());
  if (r.max() > o.drift_tol) {
    throw InvariantDrift(std::string("conservation drift in ") + which + " at t=" + std::to_string(s.time) +
                         ": momentum " + std::to_string(r.momentum) + ", energy " + std::to_string(r.energy));
  }
}

inline void apply_in_place(std::span<double> a, std::span<double> b, const Vec& a2, const Vec& b2) {
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = a2[static_cast<int>(k)];
    b[k] = b2[static_cast<int>(k)];
  }
}

}  // namespace detail

inline int state_size(const ParticleState& s) { return s.n; }
inline int state_size(const CoupledState& s) { return s.u.n; }
inline double& state_time(ParticleState& s) { return s.time; }
inline double& state_time(CoupledState& s) { return s.u.time; }

/// Runs the (coupled) Nanbu system until t_end. `recorder(state, events)` is
/// called at every record time with the state's clock set to that time;
/// `on_event` sees every jump, diagonal no-ops included.
template <class State, std::uniform_random_bit_generator G, class Recorder, class PairSampler = UniformPairs,
          class EventSink = NoEvents>
RunStats run(State& state, const AngularKernel& kernel, const RunOptions& opts, G& g, Recorder&& recorder,
             PairSampler pairs = {}, EventSink&& on_event = {}) {
  static_assert(std::is_same_v<State, ParticleState> || std::is_same_v<State, CoupledState>);
  constexpr bool coupled = std::is_same_v<State, CoupledState>;
  if (!kernel.finite_mass()) throw std::invalid_argument("run: kernel needs a Grad cut-off (finite total mass)");
  if (opts.t_end < 0.0) throw std::invalid_argument("run: t_end must be >= 0");
  if constexpr (coupled) {
    if (state.u.n != state.v.n || state.u.d != state.v.d) throw std::invalid_argument("run: coupled marginals differ in shape");
  }

  const int n = state_size(state);
  const double t0 = state_time(state);
  const double t_end = t0 + opts.t_end;
  const double rate = static_cast<double>(n) * kernel.total_mass();
  const std::vector<double> grid = detail::record_times(t0, t_end, opts.record_dt);
  std::size_t next_record = 0;
  RunStats stats;

  auto set_time = [&](double t) {
    state_time(state) = t;
    if constexpr (coupled) state.v.time = t;
  };
  auto emit = [&](double t) {
    set_time(t);
    if constexpr (coupled) {
      if (opts.renormalize) {
        renormalize(state.u);
        renormalize(state.v);
      }
      detail::check_drift(state.u, opts, stats, "u");
      detail::check_drift(state.v, opts, stats, "v");
    } else {
      if (opts.renormalize) renormalize(state);
      detail::check_drift(state, opts, stats, "state");
    }
    recorder(static_cast<const State&>(state), stats.events);
    ++stats.records;
  };

  std::exponential_distribution<double> wait(rate > 0.0 ? rate : 1.0);
  double t = t0;
  bool stopped_early = false;
  for (;;) {
    if (stats.events >= opts.max_events) {
      stopped_early = true;
      break;
    }
    const double t_next = rate > 0.0 ? t + wait(g) : std::numeric_limits<double>::infinity();
    while (next_record < grid.size() && grid[next_record] < t_next && grid[next_record] <= t_end) emit(grid[next_record++]);
    if (t_next > t_end) break;
    t = t_next;

    const auto [a, b] = pairs(n, g);
    const double theta = sample_theta(kernel, g);
    double phi = std::numeric_limits<double>::quiet_NaN();
    ++stats.events;
    if (a == b) {
      ++stats.diagonal_events;
    } else if constexpr (coupled) {
      auto ua = state.u[a], ub = state.u[b], va = state.v[a], vb = state.v[b];
      const double before = dist2(ua, va) + dist2(ub, vb);
      const CoupledCollision c = coupled_collide(ua, ub, va, vb, theta, g);
      detail::apply_in_place(ua, ub, c.u, c.u_star);
      detail::apply_in_place(va, vb, c.v, c.v_star);
      phi = c.phi;
      if (opts.check_monotone) {
        const double after = dist2(ua, va) + dist2(ub, vb);
        const double excess = after - before;
        stats.max_monotone_excess = std::max(stats.max_monotone_excess, excess);
        if (excess > 1e-12 * before + 1e-18) ++stats.monotone_violations;
      }
    } else {
      auto va = state[a], vb = state[b];
      if (dist2(va, vb) > 0.0) {
        const UnitVector np = isotropic_step(UnitVector(diff(va, vb)), theta, g);
        const PostCollision pc = collide_pair(va, vb, np);
        detail::apply_in_place(va, vb, pc.v, pc.v_star);
      }
    }
    on_event(CollisionEvent{t, a, b, theta, phi});
    if (opts.record_every > 0 && stats.events % opts.record_every == 0) emit(t);
  }

  if (stopped_early) {
    set_time(t);
    emit(t);
  } else {
    while (next_record < grid.size()) emit(grid[next_record++]);
    set_time(t_end);
  }
  return stats;
}

}  // namespace nanbu

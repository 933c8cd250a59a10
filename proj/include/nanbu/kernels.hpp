#pragma once

// Angular collision kernels b(dθ) on [0,π] with Grad's cut-off.
//
// Three families are provided: a uniform density, the grazing power law
// θ^{-(1+ν)}dθ (ν in (0,2), infinite mass unless cut off), and finite sums of
// atoms. Kernels never see the relative speed, which is what makes the
// collisions Maxwellian.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace nanbu {

class ZeroMassKernel : public std::domain_error {
 public:
  ZeroMassKernel() : std::domain_error("kernel has zero (or infinite) total mass; cannot sample a scattering angle") {}
};

class KernelSpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Uniform density on [0,π]; `mass` is the mass of the uncut kernel.
struct UniformDensity {
  double mass = 1.0;
};

/// scale·θ^{-(1+ν)}dθ on (0,π].
struct TruncatedPower {
  double nu = 0.5;
  double scale = 1.0;
};

struct Atom {
  double theta;
  double mass;
};

struct Atoms {
  std::vector<Atom> atoms;
};

using KernelFamily = std::variant<UniformDensity, TruncatedPower, Atoms>;

namespace detail {

inline double gk_integrate(auto&& fn, double a, double b) {
  if (b <= a) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn, a, b, 20, 1e-13, &err);
}

/// ∫_a^b sin²θ·θ^{-(1+ν)} dθ for 0 ≤ a ≤ b ≤ 0.5, integrated term by term from
/// the Taylor series of sin²θ.
inline double power_levy_series(double nu, double a, double b) {
  double sum = 0.0;
  double coeff = 1.0;  // 2^{2j-1}/(2j)! at j = 1
  for (int j = 1; j < 40; ++j) {
    const double k = 2.0 * j - nu;
    const double term = coeff * (std::pow(b, k) - (a > 0.0 ? std::pow(a, k) : 0.0)) / k;
    sum += (j % 2 == 1) ? term : -term;
    if (std::abs(term) < 1e-19 * std::max(1.0, std::abs(sum))) break;
    coeff *= 4.0 / ((2.0 * j + 1) * (2.0 * j + 2));
  }
  return sum;
}

inline double power_levy(double nu, double eps) {
  constexpr double split = 0.5;
  const auto integrand = [nu](double t) {
    const double s = std::sin(t);
    return s * s * std::pow(t, -1.0 - nu);
  };
  if (eps >= split) return gk_integrate(integrand, eps, std::numbers::pi);
  return power_levy_series(nu, eps, split) + gk_integrate(integrand, split, std::numbers::pi);
}

}  // namespace detail

class AngularKernel {
 public:
  static AngularKernel uniform(double mass, double eps = 0.0) {
    if (!(mass >= 0.0) || !std::isfinite(mass)) throw KernelSpecError("uniform: mass must be finite and >= 0");
    return AngularKernel(UniformDensity{mass}, eps);
  }

  static AngularKernel power(double nu, double eps, double scale = 1.0) {
    if (!(nu > 0.0 && nu < 2.0)) throw KernelSpecError("power: nu must lie in (0,2)");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw KernelSpecError("power: scale must be positive");
    return AngularKernel(TruncatedPower{nu, scale}, eps);
  }

  static AngularKernel atoms(std::vector<Atom> atoms, double eps = 0.0) {
    for (const Atom& a : atoms) {
      if (!(a.theta >= 0.0 && a.theta <= std::numbers::pi)) throw KernelSpecError("atoms: theta must lie in [0,pi]");
      if (!(a.mass >= 0.0) || !std::isfinite(a.mass)) throw KernelSpecError("atoms: mass must be finite and >= 0");
    }
    std::sort(atoms.begin(), atoms.end(), [](const Atom& x, const Atom& y) { return x.theta < y.theta; });
    return AngularKernel(Atoms{std::move(atoms)}, eps);
  }

  const KernelFamily& family() const { return family_; }
  double cutoff() const { return eps_; }
  /// b̄_ε; +∞ for an uncut power law.
  double total_mass() const { return total_mass_; }
  /// λ_ε = ∫_{[ε,π]} sin²θ b(dθ).
  double levy_intensity() const { return levy_; }
  bool finite_mass() const { return std::isfinite(total_mass_); }

  /// Canonical text in the kernel grammar.
  std::string describe() const {
    std::ostringstream os;
    os << std::setprecision(17);
    std::visit(
        [&](const auto& f) {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, UniformDensity>) {
            os << "uniform(mass=" << f.mass << ", eps=" << eps_ << ")";
          } else if constexpr (std::is_same_v<T, TruncatedPower>) {
            os << "power(nu=" << f.nu << ", eps=" << eps_;
            if (f.scale != 1.0) os << ", scale=" << f.scale;
            os << ")";
          } else {
            os << "atoms([";
            for (std::size_t i = 0; i < f.atoms.size(); ++i)
              os << (i ? "," : "") << "(" << f.atoms[i].theta << "," << f.atoms[i].mass << ")";
            os << "]";
            if (eps_ > 0.0) os << ", eps=" << eps_;
            os << ")";
          }
        },
        family_);
    return os.str();
  }

  /// CDF of the normalized cut-off law b_ε/b̄_ε, for the continuous families.
  double cdf(double theta) const {
    if (theta < eps_) return 0.0;
    if (theta >= std::numbers::pi) return 1.0;
    return std::visit(
        [&](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, UniformDensity>) {
            return (theta - eps_) / (std::numbers::pi - eps_);
          } else if constexpr (std::is_same_v<T, TruncatedPower>) {
            const double lo = std::pow(eps_, -f.nu), hi = std::pow(std::numbers::pi, -f.nu);
            return (lo - std::pow(theta, -f.nu)) / (lo - hi);
          } else {
            double acc = 0.0;
            for (const Atom& a : f.atoms)
              if (a.theta >= eps_ && a.theta <= theta) acc += a.mass;
            return acc / total_mass_;
          }
        },
        family_);
  }

 private:
  AngularKernel(KernelFamily family, double eps) : family_(std::move(family)), eps_(eps) {
    if (!(eps >= 0.0 && eps <= std::numbers::pi)) throw KernelSpecError("cut-off eps must lie in [0,pi]");
    recompute();
  }

  void recompute() {
    constexpr double pi = std::numbers::pi;
    std::visit(
        [&](const auto& f) {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, UniformDensity>) {
            const double rho = f.mass / pi;
            total_mass_ = rho * (pi - eps_);
            levy_ = rho * detail::gk_integrate([](double t) { return std::sin(t) * std::sin(t); }, eps_, pi);
          } else if constexpr (std::is_same_v<T, TruncatedPower>) {
            total_mass_ = eps_ > 0.0 ? f.scale * (std::pow(eps_, -f.nu) - std::pow(pi, -f.nu)) / f.nu
                                     : std::numeric_limits<double>::infinity();
            levy_ = f.scale * detail::power_levy(f.nu, eps_);
          } else {
            total_mass_ = 0.0;
            levy_ = 0.0;
            for (const Atom& a : f.atoms) {
              if (a.theta < eps_) continue;
              total_mass_ += a.mass;
              levy_ += a.mass * std::sin(a.theta) * std::sin(a.theta);
            }
          }
        },
        family_);
  }

  KernelFamily family_;
  double eps_ = 0.0;
  double total_mass_ = 0.0;
  double levy_ = 0.0;
};

inline double levy_intensity(const AngularKernel& k) { return k.levy_intensity(); }

/// b_ε = 1{θ ≥ ε}·b with recomputed b̄_ε and λ_ε.
inline AngularKernel grad_cutoff(const AngularKernel& k, double eps) {
  if (!(eps >= 0.0 && eps <= std::numbers::pi)) throw KernelSpecError("grad_cutoff: eps must lie in (0,pi]");
  return std::visit(
      [&](const auto& f) -> AngularKernel {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, UniformDensity>) {
          return AngularKernel::uniform(f.mass, eps);
        } else if constexpr (std::is_same_v<T, TruncatedPower>) {
          if (eps <= 0.0) throw KernelSpecError("grad_cutoff: eps must be > 0 for the power family (infinite mass)");
          return AngularKernel::power(f.nu, eps, f.scale);
        } else {
          return AngularKernel::atoms(f.atoms, eps);
        }
      },
      k.family());
}

/// θ ~ b_ε(dθ)/b̄_ε.
template <std::uniform_random_bit_generator G>
double sample_theta(const AngularKernel& k, G& g) {
  if (!(k.total_mass() > 0.0) || !k.finite_mass()) throw ZeroMassKernel();
  const double eps = k.cutoff();
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(g);
  return std::visit(
      [&](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, UniformDensity>) {
          return eps + u * (std::numbers::pi - eps);
        } else if constexpr (std::is_same_v<T, TruncatedPower>) {
          const double lo = std::pow(eps, -f.nu), hi = std::pow(std::numbers::pi, -f.nu);
          const double t = std::pow(lo - u * (lo - hi), -1.0 / f.nu);
          return std::clamp(t, eps, std::numbers::pi);
        } else {
          const double target = u * k.total_mass();
          double acc = 0.0;
          const Atom* last = nullptr;
          for (const Atom& a : f.atoms) {
            if (a.theta < eps || a.mass <= 0.0) continue;
            acc += a.mass;
            last = &a;
            if (target < acc) return a.theta;
          }
          return last->theta;
        }
      },
      k.family());
}

// ---------------------------------------------------------------------------
// Kernel grammar:
//   uniform(mass=M, eps=E)   power(nu=V, eps=E[, scale=S])   atoms([(T,M),...][, eps=E])
// Numbers accept `pi` products and quotients, e.g. pi/2 or 2*pi/3.

namespace detail {

class KernelParser {
 public:
  explicit KernelParser(std::string_view s) : s_(s) {}

  AngularKernel parse() {
    const std::string name = ident();
    expect('(');
    AngularKernel k = build(name);
    expect(')');
    skip();
    if (pos_ != s_.size()) fail("trailing characters");
    return k;
  }

 private:
  AngularKernel build(const std::string& name) {
    if (name == "atoms") {
      std::vector<Atom> atoms;
      expect('[');
      skip();
      if (peek() != ']') {
        for (;;) {
          expect('(');
          const double t = number();
          expect(',');
          const double m = number();
          expect(')');
          atoms.push_back({t, m});
          skip();
          if (peek() == ',') {
            ++pos_;
            continue;
          }
          break;
        }
      }
      expect(']');
      double eps = 0.0;
      skip();
      while (peek() == ',') {
        ++pos_;
        const std::string key = ident();
        expect('=');
        const double v = number();
        if (key == "eps") eps = v;
        else fail("unknown atoms parameter '" + key + "'");
        skip();
      }
      return AngularKernel::atoms(std::move(atoms), eps);
    }

    double mass = std::numeric_limits<double>::quiet_NaN();
    double nu = std::numeric_limits<double>::quiet_NaN();
    double eps = 0.0, scale = 1.0;
    skip();
    while (peek() != ')') {
      const std::string key = ident();
      expect('=');
      const double v = number();
      if (key == "mass") mass = v;
      else if (key == "nu") nu = v;
      else if (key == "eps") eps = v;
      else if (key == "scale") scale = v;
      else fail("unknown parameter '" + key + "'");
      skip();
      if (peek() == ',') ++pos_;
      skip();
    }
    if (name == "uniform") {
      if (std::isnan(mass)) mass = 1.0;
      return AngularKernel::uniform(mass, eps);
    }
    if (name == "power") {
      if (std::isnan(nu)) fail("power kernel requires nu");
      if (eps <= 0.0) throw KernelSpecError("power kernel requires eps > 0 (infinite total mass otherwise)");
      return AngularKernel::power(nu, eps, scale);
    }
    fail("unknown kernel family '" + name + "'");
  }

  double number() {
    double v = factor();
    for (;;) {
      skip();
      const char c = peek();
      if (c == '*') {
        ++pos_;
        v *= factor();
      } else if (c == '/') {
        ++pos_;
        v /= factor();
      } else {
        return v;
      }
    }
  }

  double factor() {
    skip();
    if (s_.substr(pos_, 2) == "pi") {
      pos_ += 2;
      return std::numbers::pi;
    }
    const char* first = s_.data() + pos_;
    const char* last = s_.data() + s_.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc()) fail("expected a number");
    pos_ += static_cast<std::size_t>(ptr - first);
    return v;
  }

  std::string ident() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (start == pos_) fail("expected an identifier");
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw KernelSpecError("kernel spec '" + std::string(s_) + "' at column " + std::to_string(pos_ + 1) + ": " + what);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline AngularKernel parse_kernel(std::string_view spec) { return detail::KernelParser(spec).parse(); }

}  // namespace nanbu

#pragma once

// Small dense vectors and symmetric matrices for velocity-space work.
// Dimensions are runtime values bounded by kMaxDim; storage is inline so
// per-collision temporaries never touch the heap.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace nanbu {

inline constexpr int kMaxDim = 16;

class Vec {
 public:
  Vec() = default;
  explicit Vec(int dim) : dim_(dim) { check_dim(dim); }
  Vec(std::initializer_list<double> xs) : dim_(static_cast<int>(xs.size())) {
    check_dim(dim_);
    std::copy(xs.begin(), xs.end(), c_.begin());
  }
  explicit Vec(std::span<const double> xs) : dim_(static_cast<int>(xs.size())) {
    check_dim(dim_);
    std::copy(xs.begin(), xs.end(), c_.begin());
  }

  static Vec basis(int dim, int axis) {
    Vec e(dim);
    e[axis] = 1.0;
    return e;
  }

  int dim() const { return dim_; }
  double& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }

  std::span<double> span() { return {c_.data(), static_cast<std::size_t>(dim_)}; }
  std::span<const double> span() const { return {c_.data(), static_cast<std::size_t>(dim_)}; }
  operator std::span<const double>() const { return span(); }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < dim_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Vec& operator*=(double s) {
    for (int i = 0; i < dim_; ++i) c_[i] *= s;
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(double s, Vec a) { return a *= s; }
  friend Vec operator*(Vec a, double s) { return a *= s; }
  friend Vec operator-(Vec a) { return a *= -1.0; }

 private:
  static void check_dim(int dim) {
    if (dim < 0 || dim > kMaxDim) throw std::invalid_argument("dimension out of range [0, 16]");
  }

  std::array<double, kMaxDim> c_{};
  int dim_ = 0;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return dot(a, a); }
inline double norm(std::span<const double> a) { return std::sqrt(norm2(a)); }

inline double dist2(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

inline Vec diff(std::span<const double> a, std::span<const double> b) {
  Vec r(static_cast<int>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) r[static_cast<int>(i)] = a[i] - b[i];
  return r;
}

/// Square d×d matrix, row-major.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(int dim) : dim_(dim), a_(static_cast<std::size_t>(dim) * dim, 0.0) {}

  static Matrix identity(int dim, double scale = 1.0) {
    Matrix m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = scale;
    return m;
  }

  int dim() const { return dim_; }
  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * dim_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * dim_ + j]; }

  double trace() const {
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
  }

  Matrix transposed() const {
    Matrix t(dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  /// Largest |a_ij − a_ji|.
  double asymmetry() const {
    double m = 0.0;
    for (int i = 0; i < dim_; ++i)
      for (int j = i + 1; j < dim_; ++j) m = std::max(m, std::abs((*this)(i, j) - (*this)(j, i)));
    return m;
  }

  friend Matrix operator*(const Matrix& x, const Matrix& y) {
    assert(x.dim_ == y.dim_);
    Matrix r(x.dim_);
    for (int i = 0; i < x.dim_; ++i)
      for (int k = 0; k < x.dim_; ++k) {
        const double xik = x(i, k);
        for (int j = 0; j < x.dim_; ++j) r(i, j) += xik * y(k, j);
      }
    return r;
  }
  friend Matrix operator-(Matrix x, const Matrix& y) {
    for (std::size_t i = 0; i < x.a_.size(); ++i) x.a_[i] -= y.a_[i];
    return x;
  }
  friend Matrix operator+(Matrix x, const Matrix& y) {
    for (std::size_t i = 0; i < x.a_.size(); ++i) x.a_[i] += y.a_[i];
    return x;
  }

  double max_abs_diff(const Matrix& o) const {
    double m = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i) m = std::max(m, std::abs(a_[i] - o.a_[i]));
    return m;
  }

 private:
  int dim_ = 0;
  std::vector<double> a_;
};

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k is the eigenvector of values[k]
  int sweeps = 0;
};

/// Cyclic Jacobi diagonalization of a symmetric matrix. Off-diagonal mass is
/// driven below tol·‖S‖_F.
inline EigenDecomposition jacobi_eigen(const Matrix& s, double tol = 1e-13, int max_sweeps = 100) {
  const int n = s.dim();
  Matrix a = s;
  Matrix v = Matrix::identity(n);
  double scale = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) scale += a(i, j) * a(i, j);
  scale = std::sqrt(scale);

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= tol * scale || off == 0.0) break;

    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) > a(y, y); });

  EigenDecomposition out;
  out.values.resize(static_cast<std::size_t>(n));
  out.vectors = Matrix(n);
  out.sweeps = sweep;
  for (int k = 0; k < n; ++k) {
    const int src = order[static_cast<std::size_t>(k)];
    out.values[static_cast<std::size_t>(k)] = a(src, src);
    for (int i = 0; i < n; ++i) out.vectors(i, k) = v(i, src);
  }
  return out;
}

}  // namespace nanbu

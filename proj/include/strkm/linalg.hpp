#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strkm/errors.hpp"
#include "strkm/rng.hpp"

namespace strkm {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ValidationError("Matrix: data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(rows_) + "x" +
                            std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ValidationError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix I(n, n);
    for (std::size_t i = 0; i < n; ++i) I(i, i) = 1.0;
    return I;
  }

  /// Column vector (n x 1) view of a vector, copied.
  static Matrix column(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }

  static Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix M(rows, cols);
    for (auto& x : M.data_) x = rng.normal();
    return M;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  Vector col(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Matrix transpose() const {
    Matrix T(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) T(j, i) = (*this)(i, j);
    return T;
  }

  /// Columns [first, first + count).
  Matrix left_cols(std::size_t count) const {
    Matrix out(rows_, count);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < count; ++j) out(i, j) = (*this)(i, j);
    return out;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  Matrix& operator+=(const Matrix& other) {
    require_same_shape(other, "operator+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& other) {
    require_same_shape(other, "operator-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
  }
  Matrix& operator*=(double s) noexcept {
    for (auto& x : data_) x *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  bool operator==(const Matrix&) const = default;

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  void require_same_shape(const Matrix& other, const char* op) const {
    if (!same_shape(other)) {
      throw ValidationError(std::string("Matrix ") + op + ": shape mismatch " +
                            std::to_string(rows_) + "x" + std::to_string(cols_) + " vs " +
                            std::to_string(other.rows_) + "x" + std::to_string(other.cols_));
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Trans { No, Yes };

/// C = op(A) * op(B).
inline Matrix gemm(const Matrix& A, const Matrix& B, Trans ta = Trans::No, Trans tb = Trans::No) {
  const std::size_t m = ta == Trans::No ? A.rows() : A.cols();
  const std::size_t k = ta == Trans::No ? A.cols() : A.rows();
  const std::size_t kb = tb == Trans::No ? B.rows() : B.cols();
  const std::size_t n = tb == Trans::No ? B.cols() : B.rows();
  if (k != kb) {
    throw ValidationError("gemm: inner dimensions differ (" + std::to_string(k) + " vs " +
                          std::to_string(kb) + ")");
  }
  Matrix C(m, n);
  const Matrix Bt = tb == Trans::No ? Matrix() : B.transpose();
  const Matrix& Bn = tb == Trans::No ? B : Bt;
  for (std::size_t i = 0; i < m; ++i) {
    auto c = C.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double a = ta == Trans::No ? A(i, p) : A(p, i);
      if (a == 0.0) continue;
      auto b = Bn.row(p);
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
  return C;
}

inline Matrix operator*(const Matrix& A, const Matrix& B) { return gemm(A, B); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) {
    throw ValidationError("axpy: length mismatch " + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// A * x
inline Vector matvec(const Matrix& A, std::span<const double> x) {
  if (A.cols() != x.size()) {
    throw ValidationError("matvec: matrix has " + std::to_string(A.cols()) +
                          " columns, vector has length " + std::to_string(x.size()));
  }
  Vector y(A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i) y[i] = dot(A.row(i), x);
  return y;
}

/// A^T * x
inline Vector matvec_t(const Matrix& A, std::span<const double> x) {
  if (A.rows() != x.size()) {
    throw ValidationError("matvec_t: matrix has " + std::to_string(A.rows()) +
                          " rows, vector has length " + std::to_string(x.size()));
  }
  Vector y(A.cols(), 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i) axpy(x[i], A.row(i), y);
  return y;
}

inline Vector operator-(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ValidationError("vector subtraction: length mismatch");
  Vector c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
  return c;
}

inline double max_abs(const Matrix& A) noexcept {
  double m = 0.0;
  for (double x : A.values()) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(const Matrix& A, const Matrix& B) { return max_abs(A - B); }

inline double frobenius_norm(const Matrix& A) noexcept {
  double s = 0.0;
  for (double x : A.values()) s += x * x;
  return std::sqrt(s);
}

inline double trace(const Matrix& A) {
  if (A.rows() != A.cols()) throw ValidationError("trace: matrix is not square");
  double t = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i) t += A(i, i);
  return t;
}

struct QrResult {
  Matrix Q;  // l x m, orthonormal columns
  Matrix R;  // m x m, upper triangular with non-negative diagonal
};

/// Thin Householder QR of an l x m matrix (l >= m). Signs are normalized so
/// that diag(R) >= 0.
inline QrResult qr_thin(const Matrix& M) {
  const std::size_t l = M.rows();
  const std::size_t m = M.cols();
  if (l < m) {
    throw ValidationError("qr_thin: need rows >= cols, got " + std::to_string(l) + "x" +
                          std::to_string(m));
  }
  double scale = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < l; ++i) s += M(i, j) * M(i, j);
    scale = std::max(scale, std::sqrt(s));
  }
  const double tol = 1e-12 * std::max(scale, 1e-300) * static_cast<double>(l);

  Matrix A = M;
  std::vector<Vector> reflectors(m);
  for (std::size_t j = 0; j < m; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < l; ++i) norm += A(i, j) * A(i, j);
    norm = std::sqrt(norm);
    if (!(norm > tol)) {
      throw DecompositionError("qr_thin: matrix is rank deficient at column " + std::to_string(j),
                               j);
    }
    const double alpha = A(j, j) > 0.0 ? -norm : norm;
    Vector v(l - j);
    for (std::size_t i = j; i < l; ++i) v[i - j] = A(i, j);
    v[0] -= alpha;
    const double vnorm = norm2(v);
    if (vnorm > 0.0)
      for (auto& x : v) x /= vnorm;
    for (std::size_t c = j; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = j; i < l; ++i) s += v[i - j] * A(i, c);
      for (std::size_t i = j; i < l; ++i) A(i, c) -= 2.0 * s * v[i - j];
    }
    reflectors[j] = std::move(v);
  }

  Matrix R(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) R(i, j) = A(i, j);

  // Q = H_0 H_1 ... H_{m-1} [I_m; 0]
  Matrix Q(l, m);
  for (std::size_t j = 0; j < m; ++j) Q(j, j) = 1.0;
  for (std::size_t jj = m; jj-- > 0;) {
    const Vector& v = reflectors[jj];
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = jj; i < l; ++i) s += v[i - jj] * Q(i, c);
      for (std::size_t i = jj; i < l; ++i) Q(i, c) -= 2.0 * s * v[i - jj];
    }
  }

  for (std::size_t j = 0; j < m; ++j) {
    if (R(j, j) < 0.0) {
      for (std::size_t c = j; c < m; ++c) R(j, c) = -R(j, c);
      for (std::size_t i = 0; i < l; ++i) Q(i, j) = -Q(i, j);
    }
  }
  return {std::move(Q), std::move(R)};
}

struct EigenResult {
  Vector values;   // descending
  Matrix vectors;  // column k pairs with values[k]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
inline EigenResult sym_eig(const Matrix& C) {
  const std::size_t n = C.rows();
  if (C.cols() != n) throw ValidationError("sym_eig: matrix is not square");
  const double scale = std::max(1.0, max_abs(C));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(C(i, j) - C(j, i)) > 1e-10 * scale) {
        throw ValidationError("sym_eig: matrix is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }

  Matrix A = C;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) A(i, j) = A(j, i) = 0.5 * (C(i, j) + C(j, i));
  Matrix V = Matrix::identity(n);
  const double fro = std::max(frobenius_norm(A), 1e-300);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    if (std::sqrt(off) <= 1e-15 * fro) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p);
          const double akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k);
          const double aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = V(k, p);
          const double vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return A(a, a) > A(b, b); });
  EigenResult out{Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = A(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = V(i, order[k]);
  }
  return out;
}

}  // namespace strkm

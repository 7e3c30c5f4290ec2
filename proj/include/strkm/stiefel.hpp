#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "strkm/errors.hpp"
#include "strkm/linalg.hpp"
#include "strkm/rng.hpp"

namespace strkm {

inline constexpr double kStiefelTolerance = 1e-8;

/// max |U^T U - I|
inline double orthonormality_defect(const Matrix& U) {
  Matrix G = gemm(U, U, Trans::Yes, Trans::No);
  for (std::size_t i = 0; i < G.rows(); ++i) G(i, i) -= 1.0;
  return max_abs(G);
}

/// An l x m matrix with orthonormal columns.
class StiefelPoint {
 public:
  StiefelPoint() = default;

  /// Takes `U` as is; throws if its defect exceeds `tolerance`.
  explicit StiefelPoint(Matrix U, double tolerance = kStiefelTolerance) : U_(std::move(U)) {
    if (U_.rows() < U_.cols()) {
      throw ValidationError("StiefelPoint: need rows >= cols, got " + std::to_string(U_.rows()) +
                            "x" + std::to_string(U_.cols()));
    }
    if (!U_.all_finite()) throw ValidationError("StiefelPoint: non-finite entries");
    const double d = orthonormality_defect(U_);
    if (d > tolerance) {
      throw ValidationError("StiefelPoint: orthonormality defect " + std::to_string(d) +
                            " exceeds tolerance");
    }
  }

  /// Orthonormalizes the columns of `M` by thin QR.
  static StiefelPoint from_qr(const Matrix& M) { return StiefelPoint(qr_thin(M).Q); }

  const Matrix& matrix() const noexcept { return U_; }
  std::size_t ambient_dim() const noexcept { return U_.rows(); }
  std::size_t subspace_dim() const noexcept { return U_.cols(); }

 private:
  Matrix U_;
};

/// Q factor of the thin QR of an i.i.d. standard Gaussian l x m matrix.
inline StiefelPoint random_stiefel(std::size_t l, std::size_t m, Rng& rng) {
  if (l < m || m == 0) {
    throw ValidationError("random_stiefel: need l >= m >= 1, got l=" + std::to_string(l) +
                          ", m=" + std::to_string(m));
  }
  return StiefelPoint::from_qr(Matrix::gaussian(l, m, rng));
}

/// Projection onto the tangent space at U: G - U sym(U^T G).
inline Matrix project_tangent(const StiefelPoint& point, const Matrix& G) {
  const Matrix& U = point.matrix();
  if (!G.same_shape(U)) throw ValidationError("project_tangent: gradient shape mismatch");
  Matrix S = gemm(U, G, Trans::Yes, Trans::No);
  Matrix sym = S;
  for (std::size_t i = 0; i < S.rows(); ++i)
    for (std::size_t j = 0; j < S.cols(); ++j) sym(i, j) = 0.5 * (S(i, j) + S(j, i));
  return G - U * sym;
}

/// State of the Cayley Adam optimizer (Li, Li & Todorovic, ICLR 2020).
///
/// One step at X (l x m) with Euclidean gradient G, k = step after increment:
///   M  <- b1 M + (1 - b1) G
///   v  <- b2 v + (1 - b2) ||G||_F^2            (scalar)
///   Mh =  M / (1 - b1^k),  vh = v / (1 - b2^k)
///   What = Mh X^T - 1/2 X (X^T Mh X^T)
///   W  = (What - What^T) / sqrt(vh + eps)         (l x l, skew-symmetric)
///   a  = min(lr, 2q / (||W||_1 + eps)),  q = 1/2
///   Y0 = X - a Mh;  Y_{i+1} = X - (a/2) W (X + Y_i),  i < iterations
///   X' = Y_iterations
///   M  <- W X sqrt(vh + eps) (1 - b1^k)      (momentum kept in the tangent space)
/// ||.||_1 is the maximum absolute column sum. v starts at 0.
struct CayleyAdamState {
  Matrix momentum;
  double second_moment = 0.0;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int iterations = 2;
  std::size_t reorthonormalizations = 0;

  CayleyAdamState() = default;
  CayleyAdamState(std::size_t l, std::size_t m) : momentum(l, m) {}
};

namespace detail {

inline double matrix_norm_one(const Matrix& A) {
  double best = 0.0;
  for (std::size_t j = 0; j < A.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < A.rows(); ++i) s += std::abs(A(i, j));
    best = std::max(best, s);
  }
  return best;
}

inline void require_finite_gradient(const Matrix& G, const char* who) {
  if (!G.all_finite()) throw DivergenceError(std::string(who) + ": non-finite gradient");
}

// QR cleanup when the retraction drifted past tolerance.
inline StiefelPoint settle(Matrix Y, std::size_t& counter) {
  if (!Y.all_finite()) throw DivergenceError("Stiefel update produced non-finite entries");
  if (orthonormality_defect(Y) > kStiefelTolerance) {
    ++counter;
    return StiefelPoint::from_qr(Y);
  }
  return StiefelPoint(std::move(Y));
}

}  // namespace detail

inline StiefelPoint cayley_adam_step(CayleyAdamState& state, const StiefelPoint& point,
                                     const Matrix& euclid_grad, double lr) {
  const Matrix& X = point.matrix();
  if (!euclid_grad.same_shape(X)) throw ValidationError("cayley_adam_step: gradient shape mismatch");
  detail::require_finite_gradient(euclid_grad, "cayley_adam_step");
  if (state.momentum.empty()) state.momentum = Matrix(X.rows(), X.cols());
  if (!state.momentum.same_shape(X)) throw ValidationError("cayley_adam_step: state shape mismatch");

  ++state.step;
  const double k = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, k);
  const double bias2 = 1.0 - std::pow(state.beta2, k);

  state.momentum = state.beta1 * state.momentum + (1.0 - state.beta1) * euclid_grad;
  const double gnorm = frobenius_norm(euclid_grad);
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * gnorm * gnorm;

  const Matrix Mh = state.momentum * (1.0 / bias1);
  const double root = std::sqrt(state.second_moment / bias2 + state.eps);

  const Matrix MXt = gemm(Mh, X, Trans::No, Trans::Yes);          // l x l
  const Matrix XtMXt = gemm(X, MXt, Trans::Yes, Trans::No);       // m x l
  const Matrix What = MXt - 0.5 * (X * XtMXt);                    // l x l
  const Matrix W = (What - What.transpose()) * (1.0 / root);

  const double alpha = std::min(lr, 1.0 / (detail::matrix_norm_one(W) + state.eps));

  Matrix Y = X - alpha * Mh;
  for (int it = 0; it < state.iterations; ++it) Y = X - (0.5 * alpha) * (W * (X + Y));

  state.momentum = (W * X) * (root * bias1);
  return detail::settle(std::move(Y), state.reorthonormalizations);
}

/// Plain Riemannian gradient step with QR retraction:
/// U' = qf(U - lr * project_tangent(U, G)). Deterministic, no state.
inline StiefelPoint projected_gradient_step(const StiefelPoint& point, const Matrix& euclid_grad,
                                            double lr) {
  detail::require_finite_gradient(euclid_grad, "projected_gradient_step");
  const Matrix step = project_tangent(point, euclid_grad);
  return StiefelPoint::from_qr(point.matrix() - lr * step);
}

}  // namespace strkm

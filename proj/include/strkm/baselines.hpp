#pragma once

#include <span>
#include <string>

#include "strkm/errors.hpp"
#include "strkm/linalg.hpp"

namespace strkm {

/// PCA reconstruction-error detector.
struct PcaModel {
  Vector mean;                 // D
  Matrix components;           // D x k, orthonormal columns
  Vector explained_fractions;  // k, descending; eigenvalue / trace
};

/// Keeps every principal direction whose share of the total variance
/// (eigenvalue over the trace of the 1/N sample covariance) is at least
/// `var_threshold`.
inline PcaModel pca_fit(const Matrix& X, double var_threshold = 0.02) {
  const std::size_t n = X.rows();
  const std::size_t d = X.cols();
  if (n < 2) throw ValidationError("pca_fit: need at least 2 samples, got " + std::to_string(n));
  if (!X.all_finite()) throw ValidationError("pca_fit: non-finite data");
  if (!(var_threshold >= 0.0 && var_threshold <= 1.0)) {
    throw ValidationError("pca_fit: var_threshold must lie in [0, 1]");
  }
  PcaModel pca;
  pca.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) axpy(1.0, X.row(i), pca.mean);
  for (auto& v : pca.mean) v /= static_cast<double>(n);

  Matrix centered = X;
  for (std::size_t i = 0; i < n; ++i) axpy(-1.0, pca.mean, centered.row(i));
  Matrix C = gemm(centered, centered, Trans::Yes) * (1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) C(j, i) = C(i, j);

  const auto eig = sym_eig(C);
  double total = 0.0;
  for (double v : eig.values) total += std::max(v, 0.0);

  std::size_t k = 0;
  if (total > 0.0) {
    while (k < d && eig.values[k] / total >= var_threshold) ++k;
  }
  pca.components = eig.vectors.left_cols(k);
  for (std::size_t j = 0; j < k; ++j) pca.explained_fractions.push_back(eig.values[j] / total);
  return pca;
}

/// ||(x - mean) - V V^T (x - mean)||^2
inline double pca_score(const PcaModel& pca, std::span<const double> x) {
  if (x.size() != pca.mean.size()) {
    throw ValidationError("pca_score: input has length " + std::to_string(x.size()) +
                          ", model expects " + std::to_string(pca.mean.size()));
  }
  Vector c(x.begin(), x.end());
  axpy(-1.0, pca.mean, c);
  if (pca.components.cols() == 0) return dot(c, c);
  const Vector r = c - matvec(pca.components, matvec_t(pca.components, c));
  return dot(r, r);
}

}  // namespace strkm

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strkm/errors.hpp"
#include "strkm/linalg.hpp"
#include "strkm/model.hpp"

namespace strkm {

enum class EnergyKind { FullEnergy, KpcaError, AeLoss, NegCorr };

inline constexpr std::array<EnergyKind, 4> kAllEnergyKinds{
    EnergyKind::FullEnergy, EnergyKind::KpcaError, EnergyKind::AeLoss, EnergyKind::NegCorr};

inline std::string_view to_string(EnergyKind k) noexcept {
  switch (k) {
    case EnergyKind::FullEnergy: return "full";
    case EnergyKind::KpcaError: return "kpca";
    case EnergyKind::AeLoss: return "aeloss";
    case EnergyKind::NegCorr: return "negcorr";
  }
  return "full";
}

inline EnergyKind parse_energy_kind(std::string_view name) {
  for (auto k : kAllEnergyKinds)
    if (to_string(k) == name) return k;
  throw ValidationError("unknown energy kind '" + std::string(name) +
                        "' (expected full, kpca, aeloss or negcorr)");
}

/// The pieces every energy is assembled from, for one sample.
///
/// With phi = phi(x) - feature_mean and h = U^T phi:
///   kpca    = ||h||^2 - 2 h^T U^T phi + ||phi||^2, evaluated as ||(I - U U^T) phi||^2
///   negcorr = -2 h^T U^T phi   (the correlation term as it enters the full energy)
///   aeloss  = ||x - psi(U h)||^2
///   full    = kpca + lambda * aeloss
struct EnergyTerms {
  double kpca = 0.0;
  double ae = 0.0;
  double negcorr = 0.0;
  double lambda = 0.0;

  double get(EnergyKind kind) const noexcept {
    switch (kind) {
      case EnergyKind::FullEnergy: return kpca + lambda * ae;
      case EnergyKind::KpcaError: return kpca;
      case EnergyKind::AeLoss: return ae;
      case EnergyKind::NegCorr: return negcorr;
    }
    return 0.0;
  }
};

inline EnergyTerms energy_terms(const StRkmModel& model, std::span<const double> x) {
  model.require_trained(x.size());
  const Matrix& U = model.U.matrix();
  const Vector phi = mlp_apply(model.encoder, x) - model.feature_mean;
  const Vector h = matvec_t(U, phi);
  const Vector proj = matvec(U, h);
  const Vector r = phi - proj;
  const Vector xr = mlp_apply(model.decoder, proj);
  const Vector e = Vector(x.begin(), x.end()) - xr;
  const Vector Utphi = matvec_t(U, phi);
  return {dot(r, r), dot(e, e), -2.0 * dot(h, Utphi), model.lambda};
}

inline double energy(const StRkmModel& model, std::span<const double> x, EnergyKind kind) {
  return energy_terms(model, x).get(kind);
}

/// One energy per row of X.
inline Vector energies(const StRkmModel& model, const Matrix& X, EnergyKind kind) {
  Vector out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = energy(model, X.row(i), kind);
  return out;
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// already sorted values: h = (n - 1) p, q = x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile: p must lie in [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::span<const double> values, double p) {
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("quantile: non-finite value");
  Vector sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, p);
}

struct Threshold {
  double gamma = 0.0;
  double tpr_target = 0.95;
};

inline constexpr std::size_t kMinThresholdSamples = 20;

/// gamma = type-7 tpr_target-quantile of the training scores.
inline Threshold select_threshold(std::span<const double> train_scores, double tpr_target = 0.95) {
  if (!(tpr_target > 0.0 && tpr_target < 1.0)) {
    throw ValidationError("select_threshold: tpr_target must lie in (0, 1)");
  }
  if (train_scores.size() < kMinThresholdSamples) {
    throw ValidationError("select_threshold: need at least " +
                          std::to_string(kMinThresholdSamples) + " scores, got " +
                          std::to_string(train_scores.size()));
  }
  return {quantile(train_scores, tpr_target), tpr_target};
}

enum class Flag { In, Out };

/// Out iff score > gamma; a score equal to gamma is in-distribution.
inline Flag classify(double score, const Threshold& t) noexcept {
  return score > t.gamma ? Flag::Out : Flag::In;
}

namespace detail {
inline void require_finite_logits(std::span<const double> logits, const char* who) {
  if (logits.empty()) throw ValidationError(std::string(who) + ": empty logits");
  for (double v : logits)
    if (!std::isfinite(v)) throw ValidationError(std::string(who) + ": non-finite logit");
}
}  // namespace detail

/// Negated maximum softmax probability, in [-1, -1/K].
inline double softmax_score(std::span<const double> logits) {
  detail::require_finite_logits(logits, "softmax_score");
  if (logits.size() < 2) throw ValidationError("softmax_score: need at least 2 logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - mx);
  return -1.0 / denom;
}

/// -T log sum_i exp(f_i / T), evaluated with max subtraction.
inline double logsumexp_energy(std::span<const double> logits, double temperature = 1.0) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("logsumexp_energy: temperature must be positive");
  }
  detail::require_finite_logits(logits, "logsumexp_energy");
  const double mx = *std::max_element(logits.begin(), logits.end()) / temperature;
  double s = 0.0;
  for (double v : logits) s += std::exp(v / temperature - mx);
  return -temperature * (mx + std::log(s));
}

}  // namespace strkm

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "strkm/energy.hpp"
#include "strkm/errors.hpp"
#include "strkm/linalg.hpp"

namespace strkm {

// Convention throughout: higher score = more anomalous, and the
// out-of-distribution samples are the positive class.

namespace detail {

inline void require_scores(std::span<const double> s, const char* who, const char* which,
                           std::size_t min_size = 1) {
  if (s.size() < min_size) {
    throw ValidationError(std::string(who) + ": " + which + " needs at least " +
                          std::to_string(min_size) + " scores, got " + std::to_string(s.size()));
  }
  for (double v : s)
    if (!std::isfinite(v)) throw ValidationError(std::string(who) + ": non-finite score");
}

inline Vector sorted_copy(std::span<const double> s) {
  Vector v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

/// Fraction of OOD scores accepted (<= gamma) at the threshold gamma that
/// accepts `tpr_target` of the in-distribution scores (type-7 quantile).
inline double fpr_at_tpr(std::span<const double> scores_in, std::span<const double> scores_out,
                         double tpr_target = 0.95) {
  detail::require_scores(scores_in, "fpr_at_tpr", "scores_in");
  detail::require_scores(scores_out, "fpr_at_tpr", "scores_out");
  if (!(tpr_target > 0.0 && tpr_target < 1.0)) {
    throw ValidationError("fpr_at_tpr: tpr_target must lie in (0, 1)");
  }
  const double gamma = quantile(scores_in, tpr_target);
  const auto accepted = std::count_if(scores_out.begin(), scores_out.end(),
                                      [gamma](double s) { return s <= gamma; });
  return static_cast<double>(accepted) / static_cast<double>(scores_out.size());
}

/// Mann-Whitney AUROC: P(out > in) + P(out == in) / 2, via midranks.
inline double auroc(std::span<const double> scores_in, std::span<const double> scores_out) {
  detail::require_scores(scores_in, "auroc", "scores_in");
  detail::require_scores(scores_out, "auroc", "scores_out");
  struct Item {
    double score;
    bool out;
  };
  std::vector<Item> items;
  items.reserve(scores_in.size() + scores_out.size());
  for (double s : scores_in) items.push_back({s, false});
  for (double s : scores_out) items.push_back({s, true});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  double rank_sum_out = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (items[k].out) rank_sum_out += midrank;
    i = j;
  }
  const double n_out = static_cast<double>(scores_out.size());
  const double n_in = static_cast<double>(scores_in.size());
  return (rank_sum_out - n_out * (n_out + 1.0) / 2.0) / (n_out * n_in);
}

/// Area under the precision-recall curve, OOD positive, step-wise rule:
/// for every distinct threshold t (descending), predict positive iff
/// score >= t, and sum (R_t - R_prev) * P_t. Tied scores enter together.
inline double aupr(std::span<const double> scores_in, std::span<const double> scores_out) {
  detail::require_scores(scores_in, "aupr", "scores_in");
  detail::require_scores(scores_out, "aupr", "scores_out");
  struct Item {
    double score;
    bool out;
  };
  std::vector<Item> items;
  items.reserve(scores_in.size() + scores_out.size());
  for (double s : scores_in) items.push_back({s, false});
  for (double s : scores_out) items.push_back({s, true});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });

  const double positives = static_cast<double>(scores_out.size());
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) {
      (items[j].out ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / positives;
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

/// Gaussian-KDE bandwidth by Silverman's rule of thumb:
/// 0.9 min(sd, IQR / 1.34) n^(-1/5); falls back to sd when the IQR is 0.
inline double silverman_bandwidth(std::span<const double> s) {
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  const Vector sorted = detail::sorted_copy(s);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

inline constexpr std::size_t kOverlapGridPoints = 2048;

/// Overlapping coefficient: integral of min(f_a, f_b) for Gaussian KDEs of the
/// two samples (Silverman bandwidth each), trapezoid rule on 2048 uniform
/// points over [min - 3h, max + 3h] of the pooled data (h the larger
/// bandwidth), clipped to [0, 1].
inline double overlap_coefficient(std::span<const double> a, std::span<const double> b) {
  detail::require_scores(a, "overlap_coefficient", "a", 5);
  detail::require_scores(b, "overlap_coefficient", "b", 5);
  const double ha = silverman_bandwidth(a);
  const double hb = silverman_bandwidth(b);
  if (!(ha > 0.0) || !(hb > 0.0)) {
    throw ValidationError("overlap_coefficient: a sample has zero spread (bandwidth 0)");
  }
  const double h = std::max(ha, hb);
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const double lo = std::min(*amin, *bmin) - 3.0 * h;
  const double hi = std::max(*amax, *bmax) + 3.0 * h;
  const double step = (hi - lo) / static_cast<double>(kOverlapGridPoints - 1);

  auto kde = [](std::span<const double> s, double bw, double x) {
    const double inv = 1.0 / bw;
    double acc = 0.0;
    for (double v : s) {
      const double z = (x - v) * inv;
      acc += std::exp(-0.5 * z * z);
    }
    return acc * inv / (static_cast<double>(s.size()) * std::sqrt(2.0 * std::numbers::pi));
  };

  double area = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < kOverlapGridPoints; ++k) {
    const double x = lo + step * static_cast<double>(k);
    const double m = std::min(kde(a, ha, x), kde(b, hb, x));
    if (k > 0) area += 0.5 * (prev + m) * step;
    prev = m;
  }
  return std::clamp(area, 0.0, 1.0);
}

/// Biased (V-statistic) MMD with kernel exp(-(x - y)^2 / (2 sigma^2)), where
/// 2 sigma^2 is the mean absolute difference over all distinct pairs of the
/// pooled scores. Returns sqrt(max(MMD^2, 0)).
inline double mmd_rbf(std::span<const double> a, std::span<const double> b) {
  detail::require_scores(a, "mmd_rbf", "a", 2);
  detail::require_scores(b, "mmd_rbf", "b", 2);
  // Fixed evaluation order makes the result exactly symmetric in (a, b).
  if (std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end())) std::swap(a, b);

  Vector pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  double dist_sum = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = i + 1; j < pooled.size(); ++j) dist_sum += std::abs(pooled[i] - pooled[j]);
  const double pairs = 0.5 * static_cast<double>(pooled.size() * (pooled.size() - 1));
  const double two_sigma_sq = dist_sum / pairs;
  if (!(two_sigma_sq > 0.0)) {
    throw ValidationError("mmd_rbf: all pooled scores are identical (bandwidth 0)");
  }

  auto mean_kernel = [two_sigma_sq](std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (double xi : x)
      for (double yj : y) {
        const double d = xi - yj;
        s += std::exp(-d * d / two_sigma_sq);
      }
    return s / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
  };
  const double mmd2 = mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b);
  return std::sqrt(std::max(mmd2, 0.0));
}

/// 1-D empirical 1-Wasserstein distance. Equal sizes: mean |a_(i) - b_(i)|
/// over sorted samples. Otherwise the integral of |F_a^-1 - F_b^-1| over the
/// merged quantile grid (exact for step quantile functions).
inline double wasserstein1(std::span<const double> a, std::span<const double> b) {
  detail::require_scores(a, "wasserstein1", "a");
  detail::require_scores(b, "wasserstein1", "b");
  const Vector sa = detail::sorted_copy(a);
  const Vector sb = detail::sorted_copy(b);
  if (sa.size() == sb.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) s += std::abs(sa[i] - sb[i]);
    return s / static_cast<double>(sa.size());
  }
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double u = 0.0, total = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(sa[i] - sb[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return total;
}

/// (s - mean) / sd with the population sd, then shifted so the minimum is 0.
inline Vector standardize_scores(std::span<const double> scores) {
  detail::require_scores(scores, "standardize_scores", "scores", 2);
  const double n = static_cast<double>(scores.size());
  double mean = 0.0;
  for (double v : scores) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : scores) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) throw ValidationError("standardize_scores: zero variance");
  Vector z(scores.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (scores[i] - mean) / sd;
  const double zmin = *std::min_element(z.begin(), z.end());
  for (auto& v : z) v -= zmin;
  return z;
}

struct EvalReport {
  double fpr95 = 0.0;
  double auroc = 0.0;
  double aupr = 0.0;
  double overlap = 0.0;
  double mmd = 0.0;
  double wasserstein1 = 0.0;
};

inline EvalReport evaluate(std::span<const double> scores_in, std::span<const double> scores_out,
                           double tpr_target = 0.95) {
  return {fpr_at_tpr(scores_in, scores_out, tpr_target),
          auroc(scores_in, scores_out),
          aupr(scores_in, scores_out),
          overlap_coefficient(scores_in, scores_out),
          mmd_rbf(scores_in, scores_out),
          wasserstein1(scores_in, scores_out)};
}

}  // namespace strkm

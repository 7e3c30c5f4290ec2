#pragma once

// The five verbs of the strkm tool. Each verb runs every job of its config
// section; all jobs are parsed and their paths checked before any work starts.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "run_config.hpp"
#include "strkm/archive.hpp"
#include "strkm/data.hpp"
#include "strkm/energy.hpp"
#include "strkm/metrics.hpp"
#include "strkm/model.hpp"

namespace strkm::cli {

// Sub-seeds: gen job i uses derive_seed(seed, 100 + i) unless it sets its own
// "seed"; its split uses derive_seed(<gen seed>, 1). Training uses the job
// seed (or the config seed) directly; the trainer derives its own streams.
inline constexpr std::uint64_t kGenSeedBase = 100;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Worker count from STRKM_THREADS, else the hardware concurrency.
inline std::size_t thread_cap() {
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("STRKM_THREADS");
  if (env == nullptr || *env == '\0') return hw;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) {
    throw ValidationError(std::string("STRKM_THREADS must be a positive integer, got '") + env + "'");
  }
  return static_cast<std::size_t>(v);
}

/// Calls fn(i) for i in [0, n) on up to `threads` workers, each owning a
/// contiguous block. fn must only write to slot i of its outputs.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t * chunk; i < std::min(n, (t + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline Dataset load_dataset(const Job& job, const std::string& key) {
  const std::string path = job.input_path(key);
  std::string format = job.get_or<std::string>("format", "");
  if (format.empty()) {
    const std::string name = std::filesystem::path(path).filename().string();
    format = (name.ends_with(".idx") || name.find("-ubyte") != std::string::npos) ? "idx" : "csv";
  }
  if (format == "csv") return load_csv(path, job.get_or<bool>("has_header", false));
  if (format == "idx") return load_idx(path);
  throw ValidationError(job.verb() + ": unknown format '" + format + "' (expected csv or idx)");
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------- gen

struct GenPlan {
  std::string generator;
  std::size_t n = 0;
  std::string output;
  std::vector<Vector> centers;
  double spread = 0.05;
  double radius = 1.0;
  double thickness = 0.1;
  std::uint64_t seed = 0;
  double split_fraction = 0.0;
  std::string split_output;
};

inline GenPlan plan_gen(const Job& job, std::uint64_t config_seed, std::size_t index) {
  GenPlan p;
  p.generator = job.get<std::string>("generator");
  if (p.generator != "blobs" && p.generator != "ring" && p.generator != "ecg" &&
      p.generator != "ecg_anomaly") {
    throw ValidationError("gen: unknown generator '" + p.generator +
                          "' (expected blobs, ring, ecg or ecg_anomaly)");
  }
  p.n = job.count("n", 0);
  if (p.n == 0) throw ValidationError("gen: 'n' must be a positive integer");
  p.output = job.output_path("output");
  p.centers = job.get_or<std::vector<Vector>>("centers", {{0.3, 0.3}, {0.7, 0.7}});
  p.spread = job.get_or<double>("spread", p.spread);
  p.radius = job.get_or<double>("radius", p.radius);
  p.thickness = job.get_or<double>("thickness", p.thickness);
  p.seed = job.has("seed") ? job.get<std::uint64_t>("seed")
                           : derive_seed(config_seed, kGenSeedBase + index);
  if (job.has("split_fraction") != job.has("split_output")) {
    throw ValidationError("gen: 'split_fraction' and 'split_output' go together");
  }
  if (job.has("split_fraction")) {
    p.split_fraction = job.get<double>("split_fraction");
    if (!(p.split_fraction > 0.0 && p.split_fraction < 1.0)) {
      throw ValidationError("gen: 'split_fraction' must lie in (0, 1)");
    }
    p.split_output = job.output_path("split_output");
  }
  return p;
}

inline void run_gen(const GenPlan& p) {
  Rng rng(p.seed);
  Dataset ds;
  if (p.generator == "blobs") {
    ds = gen_blobs(p.n, p.centers, p.spread, rng);
  } else if (p.generator == "ring") {
    ds = gen_ring(p.n, p.radius, p.thickness, rng);
  } else {
    ds = gen_ecg_like(p.n, p.generator == "ecg_anomaly", rng);
  }
  if (p.split_output.empty()) {
    save_csv(p.output, ds);
    return;
  }
  Rng split_rng(derive_seed(p.seed, 1));
  const auto [first, second] = split(ds, p.split_fraction, split_rng);
  save_csv(p.output, first);
  save_csv(p.split_output, second);
}

// ---------------------------------------------------------------- train

struct TrainPlan {
  Job job;
  TrainConfig config;
  std::string model_out;
  std::string history_out;
};

inline TrainPlan plan_train(const Job& job, std::uint64_t config_seed) {
  job.input_path("data");
  TrainPlan p{job, train_config_from(job, config_seed), job.output_path("model_out"),
              job.optional_output_path("history_out")};
  return p;
}

inline void run_train(const TrainPlan& p) {
  const Dataset data = load_dataset(p.job, "data");
  const TrainResult result = train(p.config, data);
  save_model(p.model_out, result.model, {p.config.seed, p.config.epochs});
  if (!p.history_out.empty()) {
    const auto& h = result.history;
    Matrix rows(h.objective.size(), 5);
    for (std::size_t e = 0; e < h.objective.size(); ++e) {
      rows(e, 0) = static_cast<double>(e + 1);
      rows(e, 1) = h.objective[e];
      rows(e, 2) = h.kpca[e];
      rows(e, 3) = h.ae[e];
      rows(e, 4) = h.defect[e];
    }
    write_numeric_csv(p.history_out, {"epoch", "objective", "kpca", "ae", "defect"}, rows);
  }
  std::cerr << "train: " << data.size() << " samples, " << p.config.epochs << " epochs, final objective "
            << format_double(result.history.objective.back()) << ", defect "
            << format_double(result.history.defect.back()) << "\n";
}

// ---------------------------------------------------------------- score

/// One column per kind, one row per sample of X.
inline std::vector<Vector> score_matrix(const StRkmModel& model, const Matrix& X,
                                        const std::vector<EnergyKind>& kinds) {
  model.require_trained(X.cols());
  std::vector<Vector> cols(kinds.size(), Vector(X.rows()));
  parallel_for(X.rows(), thread_cap(), [&](std::size_t i) {
    const EnergyTerms t = energy_terms(model, X.row(i));
    for (std::size_t k = 0; k < kinds.size(); ++k) cols[k][i] = t.get(kinds[k]);
  });
  return cols;
}

struct ScorePlan {
  Job job;
  std::string model;
  std::vector<EnergyKind> kinds;
  std::string output;
};

inline ScorePlan plan_score(const Job& job) {
  job.input_path("data");
  return {job, job.input_path("model"), job.energies(), job.output_path("output")};
}

inline void run_score(const ScorePlan& p) {
  const StRkmModel model = load_model(p.model).model;
  const Dataset data = load_dataset(p.job, "data");
  const auto cols = score_matrix(model, data.X, p.kinds);
  Matrix out(data.size(), p.kinds.size() + 1);
  std::vector<std::string> header{"index"};
  for (auto k : p.kinds) header.emplace_back(to_string(k));
  for (std::size_t i = 0; i < data.size(); ++i) {
    out(i, 0) = static_cast<double>(i);
    for (std::size_t k = 0; k < p.kinds.size(); ++k) out(i, k + 1) = cols[k][i];
  }
  write_numeric_csv(p.output, header, out);
}

// ---------------------------------------------------------------- eval

inline Vector score_column(const NumericTable& t, const std::string& name, const std::string& path) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw FormatError(path + ": no score column '" + name + "'");
  return t.values.col(static_cast<std::size_t>(it - t.header.begin()));
}

inline std::string report_block(EnergyKind kind, std::span<const double> in,
                                std::span<const double> out, double tpr_target) {
  const EvalReport r = evaluate(in, out, tpr_target);
  std::ostringstream s;
  s << "energy = " << to_string(kind) << "\n"
    << "n_in = " << in.size() << "\n"
    << "n_out = " << out.size() << "\n"
    << "tpr_target = " << format_double(tpr_target) << "\n"
    << "threshold = " << format_double(quantile(in, tpr_target)) << "\n"
    << "fpr95 = " << format_double(r.fpr95) << "\n"
    << "auroc = " << format_double(r.auroc) << "\n"
    << "aupr = " << format_double(r.aupr) << "\n"
    << "overlap = " << format_double(r.overlap) << "\n"
    << "mmd = " << format_double(r.mmd) << "\n"
    << "wasserstein1 = " << format_double(r.wasserstein1) << "\n";
  return s.str();
}

/// Rows of (bin_lo, bin_hi, in_density, out_density) for the jointly
/// standardized scores; densities integrate to 1 over the bins.
inline Matrix standardized_histogram(std::span<const double> in, std::span<const double> out,
                                     std::size_t bins) {
  Vector pooled(in.begin(), in.end());
  pooled.insert(pooled.end(), out.begin(), out.end());
  const Vector z = standardize_scores(pooled);
  const double hi = *std::max_element(z.begin(), z.end());
  const double width = hi > 0.0 ? hi / static_cast<double>(bins) : 1.0;
  Matrix h(bins, 4);
  for (std::size_t b = 0; b < bins; ++b) {
    h(b, 0) = width * static_cast<double>(b);
    h(b, 1) = width * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < z.size(); ++i) {
    const bool is_in = i < in.size();
    const auto b = std::min(bins - 1, static_cast<std::size_t>(z[i] / width));
    h(b, is_in ? 2 : 3) += 1.0 / (width * static_cast<double>(is_in ? in.size() : out.size()));
  }
  return h;
}

struct EvalPlan {
  std::string in_scores;
  std::string out_scores;
  std::vector<EnergyKind> kinds;
  bool kinds_given = false;
  std::string report;
  std::string histogram;
  std::size_t bins = 50;
  double tpr_target = 0.95;
};

inline EvalPlan plan_eval(const Job& job) {
  EvalPlan p;
  p.in_scores = job.input_path("in_scores");
  p.out_scores = job.input_path("out_scores");
  p.kinds_given = job.has("energy");
  p.kinds = job.energies();
  p.report = job.optional_output_path("report");
  p.histogram = job.optional_output_path("histogram");
  p.bins = job.count("bins", p.bins);
  if (p.bins == 0) throw ValidationError("eval: 'bins' must be positive");
  p.tpr_target = job.get_or<double>("tpr_target", p.tpr_target);
  return p;
}

inline void run_eval(const EvalPlan& p) {
  const NumericTable tin = read_numeric_csv(p.in_scores, true);
  const NumericTable tout = read_numeric_csv(p.out_scores, true);
  std::vector<EnergyKind> kinds;
  for (auto k : p.kinds) {
    const std::string name(to_string(k));
    const bool present = std::count(tin.header.begin(), tin.header.end(), name) &&
                         std::count(tout.header.begin(), tout.header.end(), name);
    if (present || p.kinds_given) kinds.push_back(k);
  }
  if (kinds.empty()) throw FormatError("eval: the score files share no energy column");

  std::string text;
  std::vector<double> hist_values;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const std::string name(to_string(kinds[k]));
    const Vector in = score_column(tin, name, p.in_scores);
    const Vector out = score_column(tout, name, p.out_scores);
    if (k > 0) text += "\n";
    text += report_block(kinds[k], in, out, p.tpr_target);
    if (!p.histogram.empty()) {
      const Matrix h = standardized_histogram(in, out, p.bins);
      for (std::size_t b = 0; b < h.rows(); ++b) {
        hist_values.push_back(static_cast<double>(k));
        for (std::size_t c = 0; c < 4; ++c) hist_values.push_back(h(b, c));
      }
    }
  }
  if (p.report.empty()) {
    std::cout << text;
  } else {
    write_text(p.report, text);
  }
  if (!p.histogram.empty()) {
    std::ostringstream s;
    s << "energy,bin_lo,bin_hi,in_density,out_density\n";
    for (std::size_t r = 0; r < hist_values.size(); r += 5) {
      s << to_string(kinds[static_cast<std::size_t>(hist_values[r])]);
      for (std::size_t c = 1; c < 5; ++c) s << "," << format_double(hist_values[r + c]);
      s << "\n";
    }
    write_text(p.histogram, s.str());
  }
}

// ---------------------------------------------------------------- report

struct ReportPlan {
  Job job;
  std::string model;
  std::vector<EnergyKind> kinds;
  std::string output;
  double tpr_target = 0.95;
};

inline ReportPlan plan_report(const Job& job) {
  job.input_path("in_data");
  job.input_path("out_data");
  return {job, job.input_path("model"), job.energies(), job.optional_output_path("output"),
          job.get_or<double>("tpr_target", 0.95)};
}

inline void run_report(const ReportPlan& p) {
  const LoadedModel loaded = load_model(p.model);
  const Dataset in = load_dataset(p.job, "in_data");
  const Dataset out = load_dataset(p.job, "out_data");
  const auto sin = score_matrix(loaded.model, in.X, p.kinds);
  const auto sout = score_matrix(loaded.model, out.X, p.kinds);
  const auto d = loaded.model.dims();
  std::ostringstream s;
  s << "model = " << p.model << "\n"
    << "input_dim = " << d.input << "\n"
    << "feature_dim = " << d.feature << "\n"
    << "subspace_dim = " << d.latent << "\n"
    << "lambda = " << format_double(loaded.model.lambda) << "\n"
    << "seed = " << loaded.meta.seed << "\n"
    << "epochs = " << loaded.meta.epochs << "\n";
  for (std::size_t k = 0; k < p.kinds.size(); ++k) {
    s << "\n" << report_block(p.kinds[k], sin[k], sout[k], p.tpr_target);
    const Threshold t{quantile(sin[k], p.tpr_target), p.tpr_target};
    const auto flagged = std::count_if(sout[k].begin(), sout[k].end(),
                                       [&](double v) { return classify(v, t) == Flag::Out; });
    s << "out_flagged = " << flagged << "\n";
  }
  if (p.output.empty()) {
    std::cout << s.str();
  } else {
    write_text(p.output, s.str());
  }
}

}  // namespace strkm::cli

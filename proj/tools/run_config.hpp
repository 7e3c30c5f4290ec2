#pragma once

// Run configuration for the strkm command line tool.
//
// A config file is one JSON object. Top-level keys are "seed" and one section
// per verb ("gen", "train", "score", "eval", "report"). A section is either an
// object (one job) or an array of objects (several jobs run in order). Every
// key is checked against the verb's list below; unknown keys are rejected.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "strkm/energy.hpp"
#include "strkm/errors.hpp"
#include "strkm/model.hpp"

namespace strkm::cli {

using nlohmann::json;

inline const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v{"gen", "train", "score", "eval", "report"};
  return v;
}

inline const std::set<std::string>& allowed_keys(const std::string& verb) {
  static const std::map<std::string, std::set<std::string>> keys{
      {"gen",
       {"generator", "n", "output", "centers", "spread", "radius", "thickness", "anomaly", "seed",
        "split_fraction", "split_output"}},
      {"train",
       {"data", "format", "has_header", "model_out", "history_out", "epochs", "batch_size",
        "lr_adam", "lr_cayley", "lambda", "subspace_dim", "feature_dim", "hidden", "seed",
        "deterministic", "freeze_prelu"}},
      {"score", {"model", "data", "format", "has_header", "energy", "output"}},
      {"eval",
       {"in_scores", "out_scores", "energy", "report", "histogram", "bins", "tpr_target"}},
      {"report",
       {"model", "in_data", "out_data", "format", "has_header", "energy", "output",
        "tpr_target"}},
  };
  auto it = keys.find(verb);
  if (it == keys.end()) throw ValidationError("unknown verb '" + verb + "'");
  return it->second;
}

struct RunConfig {
  std::uint64_t seed = 0;
  json sections = json::object();

  /// Jobs for `verb`: the section's objects, or one empty job if absent.
  std::vector<json> jobs(const std::string& verb) const {
    if (!sections.contains(verb)) return {json::object()};
    const json& s = sections.at(verb);
    if (s.is_array()) return std::vector<json>(s.begin(), s.end());
    return {s};
  }
};

inline void check_job_keys(const std::string& verb, const json& job) {
  if (!job.is_object()) throw ValidationError("config: section '" + verb + "' must hold objects");
  const auto& allowed = allowed_keys(verb);
  for (const auto& [key, value] : job.items()) {
    if (!allowed.count(key)) {
      throw ValidationError("config: unknown key '" + key + "' in section '" + verb + "'");
    }
  }
}

inline RunConfig parse_run_config(const json& root) {
  if (!root.is_object()) throw ValidationError("config: top level must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : root.items()) {
    if (key == "seed") {
      if (!value.is_number_unsigned()) throw ValidationError("config: 'seed' must be a non-negative integer");
      cfg.seed = value.get<std::uint64_t>();
      continue;
    }
    if (std::find(verbs().begin(), verbs().end(), key) == verbs().end()) {
      throw ValidationError("config: unknown top-level key '" + key + "'");
    }
    if (value.is_array()) {
      for (const auto& job : value) check_job_keys(key, job);
    } else {
      check_job_keys(key, value);
    }
    cfg.sections[key] = value;
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  return parse_run_config(root);
}

/// Typed access to one job's keys with contextual errors.
class Job {
 public:
  Job(std::string verb, json body) : verb_(std::move(verb)), body_(std::move(body)) {
    check_job_keys(verb_, body_);
  }

  bool has(const std::string& key) const { return body_.contains(key) && !body_.at(key).is_null(); }

  template <typename T>
  T get(const std::string& key) const {
    if (!has(key)) throw ValidationError(verb_ + ": missing required key '" + key + "'");
    try {
      return body_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(verb_ + ": key '" + key + "' has the wrong type");
    }
  }

  template <typename T>
  T get_or(const std::string& key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = body_.at(key);
    if (!v.is_number_unsigned()) throw ValidationError(verb_ + ": key '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
  }

  std::vector<EnergyKind> energies() const {
    if (!has("energy")) return {kAllEnergyKinds.begin(), kAllEnergyKinds.end()};
    const json& v = body_.at("energy");
    std::vector<EnergyKind> out;
    if (v.is_string()) {
      out.push_back(parse_energy_kind(v.get<std::string>()));
    } else if (v.is_array()) {
      for (const auto& e : v) {
        if (!e.is_string()) throw ValidationError(verb_ + ": 'energy' entries must be strings");
        out.push_back(parse_energy_kind(e.get<std::string>()));
      }
    } else {
      throw ValidationError(verb_ + ": 'energy' must be a string or array of strings");
    }
    if (out.empty()) throw ValidationError(verb_ + ": 'energy' is empty");
    return out;
  }

  /// Path of an existing file.
  std::string input_path(const std::string& key) const {
    const auto p = get<std::string>(key);
    if (!std::filesystem::is_regular_file(p)) {
      throw IoError(verb_ + ": input '" + key + "' = '" + p + "' does not exist");
    }
    return p;
  }

  /// Path whose parent directory exists.
  std::string output_path(const std::string& key) const {
    const auto p = get<std::string>(key);
    const auto parent = std::filesystem::path(p).parent_path();
    if (!parent.empty() && !std::filesystem::is_directory(parent)) {
      throw IoError(verb_ + ": directory for output '" + key + "' = '" + p + "' does not exist");
    }
    return p;
  }

  std::string optional_output_path(const std::string& key) const {
    return has(key) ? output_path(key) : std::string();
  }

  const json& body() const noexcept { return body_; }
  const std::string& verb() const noexcept { return verb_; }

 private:
  std::string verb_;
  json body_;
};

/// TrainConfig from a train job; unspecified keys keep the library defaults
/// (lambda 100, m 10, batch 256, 1600 epochs, Adam 2e-4, Cayley Adam 1e-4).
inline TrainConfig train_config_from(const Job& job, std::uint64_t seed) {
  TrainConfig c;
  c.epochs = job.count("epochs", c.epochs);
  c.batch_size = job.count("batch_size", c.batch_size);
  c.lr_adam = job.get_or<double>("lr_adam", c.lr_adam);
  c.lr_cayley = job.get_or<double>("lr_cayley", c.lr_cayley);
  c.lambda = job.get_or<double>("lambda", c.lambda);
  c.subspace_dim = job.count("subspace_dim", c.subspace_dim);
  c.feature_dim = job.count("feature_dim", c.feature_dim);
  if (job.has("hidden")) c.hidden = job.get<std::vector<std::size_t>>("hidden");
  c.seed = job.has("seed") ? job.get<std::uint64_t>("seed") : seed;
  c.deterministic = job.get_or<bool>("deterministic", false);
  c.freeze_prelu = job.get_or<bool>("freeze_prelu", false);
  return c;
}

}  // namespace strkm::cli

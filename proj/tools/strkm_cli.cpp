// strkm: train St-RKM detectors, score data, evaluate and report.
//
//   strkm gen    --config run.json
//   strkm train  --config run.json [--epochs N --lambda L ...]
//   strkm score  --model m.strkm --data x.csv --output scores.csv --energy full
//   strkm eval   --in a.csv --out b.csv --report report.txt --histogram hist.csv
//   strkm report --model m.strkm --in a.csv --out b.csv
//
// Flags given on the command line override the same keys in every job of the
// verb's config section. Exit codes: 0 ok, 1 validation, 2 IO, 3 divergence.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

using strkm::cli::json;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> energy;
  std::optional<double> lambda;
  std::optional<std::size_t> subspace_dim;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  bool deterministic = false;
  // verb-specific keys: (json key, value)
  std::vector<std::pair<std::string, std::string>> strings;
  std::optional<std::size_t> n;
  std::optional<double> tpr_target;
};

void set_if(json& job, const char* key, const auto& value) {
  if (value) job[key] = *value;
}

json apply_overrides(json job, const std::string& verb, const Overrides& o, const std::vector<std::string>& string_values) {
  if (!o.energy.empty() && (verb == "score" || verb == "eval" || verb == "report")) job["energy"] = o.energy;
  if (verb == "train") {
    set_if(job, "lambda", o.lambda);
    set_if(job, "subspace_dim", o.subspace_dim);
    set_if(job, "epochs", o.epochs);
    set_if(job, "batch_size", o.batch_size);
    if (o.deterministic) job["deterministic"] = true;
  }
  if (verb == "gen") set_if(job, "n", o.n);
  if (verb == "eval" || verb == "report") set_if(job, "tpr_target", o.tpr_target);
  for (std::size_t i = 0; i < o.strings.size(); ++i) {
    if (!string_values[i].empty()) job[o.strings[i].first] = string_values[i];
  }
  return job;
}

int run_verb(const std::string& verb, const Overrides& o, const std::vector<std::string>& string_values) {
  using namespace strkm::cli;
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;

  std::vector<Job> jobs;
  for (const auto& body : cfg.jobs(verb)) jobs.emplace_back(verb, apply_overrides(body, verb, o, string_values));

  if (verb == "gen") {
    std::vector<GenPlan> plans;
    for (std::size_t i = 0; i < jobs.size(); ++i) plans.push_back(plan_gen(jobs[i], cfg.seed, i));
    for (const auto& p : plans) run_gen(p);
  } else if (verb == "train") {
    std::vector<TrainPlan> plans;
    for (const auto& j : jobs) plans.push_back(plan_train(j, cfg.seed));
    for (const auto& p : plans) run_train(p);
  } else if (verb == "score") {
    std::vector<ScorePlan> plans;
    for (const auto& j : jobs) plans.push_back(plan_score(j));
    for (const auto& p : plans) run_score(p);
  } else if (verb == "eval") {
    std::vector<EvalPlan> plans;
    for (const auto& j : jobs) plans.push_back(plan_eval(j));
    for (const auto& p : plans) run_eval(p);
  } else {
    std::vector<ReportPlan> plans;
    for (const auto& j : jobs) plans.push_back(plan_report(j));
    for (const auto& p : plans) run_report(p);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"St-RKM out-of-distribution detection"};
  app.require_subcommand(1);

  struct VerbFlags {
    CLI::App* cmd;
    Overrides o;
    std::vector<std::string> values;
  };
  std::vector<VerbFlags> verbs;
  verbs.reserve(5);

  auto add_verb = [&](const std::string& name, const std::string& help,
                      std::vector<std::pair<std::string, std::string>> path_flags) {
    verbs.push_back({app.add_subcommand(name, help), {}, {}});
    auto& v = verbs.back();
    v.o.strings = std::move(path_flags);
    v.values.resize(v.o.strings.size());
    v.cmd->add_option("--config", v.o.config, "JSON run configuration");
    v.cmd->add_option("--seed", v.o.seed, "Config seed (all randomness derives from it)");
    for (std::size_t i = 0; i < v.o.strings.size(); ++i) {
      v.cmd->add_option(v.o.strings[i].second, v.values[i], "Sets '" + v.o.strings[i].first + "'");
    }
    return v.cmd;
  };

  auto* gen = add_verb("gen", "Generate a synthetic dataset CSV",
                       {{"generator", "--generator"}, {"output", "--output"}});
  gen->add_option("--n", verbs.back().o.n, "Number of samples");

  auto* train = add_verb("train", "Train a model and write its archive",
                         {{"data", "--data"}, {"model_out", "--model-out"}, {"history_out", "--history-out"}});
  {
    auto& o = verbs.back().o;
    train->add_option("--lambda", o.lambda, "Reconstruction weight");
    train->add_option("--subspace-dim", o.subspace_dim, "Latent dimension m");
    train->add_option("--epochs", o.epochs, "Training epochs");
    train->add_option("--batch-size", o.batch_size, "Minibatch size");
    train->add_flag("--deterministic", o.deterministic, "Full-batch gradient descent");
  }

  auto* score = add_verb("score", "Write per-sample energies",
                         {{"model", "--model"}, {"data", "--data"}, {"output", "--output"}});
  score->add_option("--energy", verbs.back().o.energy, "full, kpca, aeloss or negcorr (repeatable)");

  auto* eval = add_verb("eval", "Compare in- and out-distribution score files",
                        {{"in_scores", "--in"}, {"out_scores", "--out"}, {"report", "--report"},
                         {"histogram", "--histogram"}});
  eval->add_option("--energy", verbs.back().o.energy, "Score columns to evaluate (repeatable)");
  eval->add_option("--tpr-target", verbs.back().o.tpr_target, "In-distribution acceptance rate");

  auto* report = add_verb("report", "Score two datasets with a model and report all metrics",
                          {{"model", "--model"}, {"in_data", "--in"}, {"out_data", "--out"}, {"output", "--output"}});
  report->add_option("--energy", verbs.back().o.energy, "Energies to report (repeatable)");
  report->add_option("--tpr-target", verbs.back().o.tpr_target, "In-distribution acceptance rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& v : verbs) {
      if (v.cmd->parsed()) return run_verb(v.cmd->get_name(), v.o, v.values);
    }
    return 1;
  } catch (const strkm::DivergenceError& e) {
    std::cerr << "strkm: diverged: " << e.what() << "\n";
    return 3;
  } catch (const strkm::IoError& e) {
    std::cerr << "strkm: io error: " << e.what() << "\n";
    return 2;
  } catch (const strkm::ValidationError& e) {
    std::cerr << "strkm: invalid input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "strkm: error: " << e.what() << "\n";
    return 1;
  }
}

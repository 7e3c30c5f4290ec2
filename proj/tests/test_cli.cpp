#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "run_config.hpp"
#include "strkm/archive.hpp"
#include "strkm/data.hpp"
#include "test_support.hpp"

using namespace strkm;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STRKM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

/// Small blobs dataset, a ring and a config that trains for a few epochs.
fs::path pipeline_dir(const std::string& name, std::size_t epochs = 5) {
  const auto dir = fixture::temp_dir(name);
  std::ostringstream cfg;
  cfg << R"({"seed": 11,
  "gen": [{"generator": "blobs", "n": 300, "output": ")" << (dir / "in.csv").string()
      << R"(", "split_fraction": 0.5, "split_output": ")" << (dir / "held.csv").string() << R"("},
          {"generator": "ring", "n": 100, "output": ")" << (dir / "ring.csv").string() << R"("}],
  "train": {"data": ")" << (dir / "in.csv").string() << R"(", "model_out": ")" << (dir / "m.strkm").string()
      << R"(", "history_out": ")" << (dir / "hist.csv").string() << R"(", "epochs": )" << epochs
      << R"(, "subspace_dim": 2, "feature_dim": 8, "hidden": [16], "batch_size": 64},
  "score": [{"model": ")" << (dir / "m.strkm").string() << R"(", "data": ")" << (dir / "held.csv").string()
      << R"(", "output": ")" << (dir / "s_in.csv").string() << R"("},
            {"model": ")" << (dir / "m.strkm").string() << R"(", "data": ")" << (dir / "ring.csv").string()
      << R"(", "output": ")" << (dir / "s_out.csv").string() << R"("}],
  "eval": {"in_scores": ")" << (dir / "s_in.csv").string() << R"(", "out_scores": ")"
      << (dir / "s_out.csv").string() << R"(", "report": ")" << (dir / "report.txt").string()
      << R"(", "histogram": ")" << (dir / "hist_scores.csv").string() << R"("}})";
  write_file(dir / "run.json", cfg.str());
  return dir;
}

int run_pipeline(const fs::path& dir) {
  for (const char* verb : {"gen", "train", "score", "eval"}) {
    const int code = run_cli(std::string(verb) + " --config " + q(dir / "run.json"));
    if (code != 0) return code;
  }
  return 0;
}

std::map<std::string, std::string> report_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos && !kv.count(line.substr(0, eq))) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

}  // namespace

TEST(Cli, PipelineSmoke) {
  const auto dir = pipeline_dir("cli_smoke");
  ASSERT_EQ(run_pipeline(dir), 0);
  const auto loaded = load_model((dir / "m.strkm").string());
  EXPECT_LE(orthonormality_defect(loaded.model.U.matrix()), 1e-8);
  EXPECT_EQ(loaded.meta.seed, 11u);
  EXPECT_EQ(loaded.meta.epochs, 5u);
  const NumericTable hist = read_numeric_csv((dir / "hist.csv").string(), true);
  EXPECT_EQ(hist.values.rows(), 5u);
  EXPECT_EQ(hist.header, (std::vector<std::string>{"epoch", "objective", "kpca", "ae", "defect"}));
  const NumericTable scores = read_numeric_csv((dir / "s_in.csv").string(), true);
  EXPECT_EQ(scores.header, (std::vector<std::string>{"index", "full", "kpca", "aeloss", "negcorr"}));
  EXPECT_EQ(scores.values.rows(), 150u);
  const auto kv = report_values(slurp(dir / "report.txt"));
  for (const char* key : {"fpr95", "auroc", "aupr", "overlap", "mmd", "wasserstein1"}) EXPECT_TRUE(kv.count(key)) << key;
  EXPECT_TRUE(fs::exists(dir / "hist_scores.csv"));
}

TEST(Cli, SameSeedGivesIdenticalOutputs) {
  const auto a = pipeline_dir("cli_det_a"), b = pipeline_dir("cli_det_b");
  ASSERT_EQ(run_pipeline(a), 0);
  ASSERT_EQ(run_pipeline(b), 0);
  EXPECT_EQ(slurp(a / "in.csv"), slurp(b / "in.csv"));
  EXPECT_EQ(slurp(a / "m.strkm"), slurp(b / "m.strkm"));
  EXPECT_EQ(slurp(a / "s_in.csv"), slurp(b / "s_in.csv"));
  EXPECT_EQ(slurp(a / "report.txt"), slurp(b / "report.txt"));
}

TEST(Cli, ThreadCountDoesNotChangeScores) {
  const auto dir = pipeline_dir("cli_threads");
  ASSERT_EQ(run_pipeline(dir), 0);
  const std::string args = "score --model " + q(dir / "m.strkm") + " --data " + q(dir / "held.csv") + " --output ";
  ASSERT_EQ(std::system(("STRKM_THREADS=1 " + std::string(STRKM_CLI_PATH) + " " + args + q(dir / "t1.csv")).c_str()), 0);
  ASSERT_EQ(std::system(("STRKM_THREADS=3 " + std::string(STRKM_CLI_PATH) + " " + args + q(dir / "t3.csv")).c_str()), 0);
  EXPECT_EQ(slurp(dir / "t1.csv"), slurp(dir / "t3.csv"));
  EXPECT_EQ(slurp(dir / "t1.csv"), slurp(dir / "s_in.csv"));
}

TEST(Cli, FlagsOverrideConfig) {
  const auto dir = pipeline_dir("cli_override");
  ASSERT_EQ(run_cli("gen --config " + q(dir / "run.json")), 0);
  ASSERT_EQ(run_cli("train --config " + q(dir / "run.json") + " --epochs 3 --lambda 2.5 --seed 4"), 0);
  const auto loaded = load_model((dir / "m.strkm").string());
  EXPECT_EQ(loaded.meta.epochs, 3u);
  EXPECT_EQ(loaded.meta.seed, 4u);
  EXPECT_EQ(loaded.model.lambda, 2.5);
}

TEST(Cli, UnknownConfigKeyIsValidationError) {
  const auto dir = fixture::temp_dir("cli_badkey");
  write_file(dir / "run.json", R"({"train": {"data": "x.csv", "learning_rate": 0.1}})");
  EXPECT_EQ(run_cli("train --config " + q(dir / "run.json")), 1);
  write_file(dir / "top.json", R"({"sead": 1})");
  EXPECT_EQ(run_cli("gen --config " + q(dir / "top.json")), 1);
  EXPECT_EQ(run_cli("train --bogus-flag"), 1);
  EXPECT_EQ(run_cli(""), 1);
}

TEST(Cli, MissingInputIsIoError) {
  const auto dir = fixture::temp_dir("cli_missing");
  EXPECT_EQ(run_cli("train --data " + q(dir / "absent.csv") + " --model-out " + q(dir / "m.strkm")), 2);
  EXPECT_EQ(run_cli("train --config " + q(dir / "absent.json")), 2);
  EXPECT_FALSE(fs::exists(dir / "m.strkm"));
}

TEST(Cli, DivergenceExitCode) {
  const auto dir = fixture::temp_dir("cli_diverge");
  Rng rng(1);
  save_csv((dir / "d.csv").string(), gen_blobs(64, {{0.3, 0.3}, {0.7, 0.7}}, 0.05, rng));
  write_file(dir / "run.json", R"({"train": {"data": ")" + (dir / "d.csv").string() + R"(", "model_out": ")" +
                                   (dir / "m.strkm").string() +
                                   R"(", "epochs": 20, "batch_size": 32, "subspace_dim": 2, "feature_dim": 4, "lr_adam": 1e300}})");
  EXPECT_EQ(run_cli("train --config " + q(dir / "run.json")), 3);
  EXPECT_FALSE(fs::exists(dir / "m.strkm"));
}

TEST(Cli, EvalOnIdenticalScores) {
  const auto dir = fixture::temp_dir("cli_same");
  Rng rng(2);
  Matrix s(200, 2);
  for (std::size_t i = 0; i < 200; ++i) {
    s(i, 0) = static_cast<double>(i);
    s(i, 1) = rng.normal();
  }
  write_numeric_csv((dir / "s.csv").string(), {"index", "full"}, s);
  ASSERT_EQ(run_cli("eval --in " + q(dir / "s.csv") + " --out " + q(dir / "s.csv") + " --report " + q(dir / "r.txt")), 0);
  const auto kv = report_values(slurp(dir / "r.txt"));
  EXPECT_EQ(kv.at("energy"), "full");
  EXPECT_EQ(std::stod(kv.at("auroc")), 0.5);
  EXPECT_GE(std::stod(kv.at("overlap")), 0.999);
  EXPECT_EQ(std::stod(kv.at("wasserstein1")), 0.0);
  EXPECT_EQ(run_cli("eval --in " + q(dir / "s.csv") + " --out " + q(dir / "s.csv") + " --energy kpca"), 2);
  EXPECT_EQ(run_cli("eval --in " + q(dir / "s.csv") + " --out " + q(dir / "s.csv") + " --energy nope"), 1);
}

TEST(Cli, ReportFlagsOutliers) {
  const auto dir = pipeline_dir("cli_report");
  ASSERT_EQ(run_pipeline(dir), 0);
  ASSERT_EQ(run_cli("report --model " + q(dir / "m.strkm") + " --in " + q(dir / "held.csv") + " --out " +
                    q(dir / "ring.csv") + " --energy full --output " + q(dir / "rep.txt")),
            0);
  const auto kv = report_values(slurp(dir / "rep.txt"));
  EXPECT_EQ(kv.at("subspace_dim"), "2");
  EXPECT_EQ(kv.at("seed"), "11");
  EXPECT_TRUE(kv.count("out_flagged"));
}

TEST(RunConfigDefaults, TrainDefaults) {
  const cli::Job job("train", cli::json::object());
  const TrainConfig c = cli::train_config_from(job, 0);
  EXPECT_EQ(c.lambda, 100.0);
  EXPECT_EQ(c.subspace_dim, 10u);
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_EQ(c.epochs, 1600u);
  EXPECT_EQ(c.lr_adam, 2e-4);
  EXPECT_EQ(c.lr_cayley, 1e-4);
}

TEST(RunConfigDefaults, RejectsUnknownVerbKeys) {
  EXPECT_THROW(cli::Job("score", cli::json{{"epochs", 3}}), ValidationError);
  EXPECT_THROW(cli::parse_run_config(cli::json{{"seed", -1}}), ValidationError);
}

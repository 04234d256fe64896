#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gtca/cli.hpp"
#include "gtca/config.hpp"
#include "gtca/errors.hpp"

using namespace gtca;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "gtca");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gtca_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  nlohmann::json sbm_config() const {
    return {{"dataset",
             {{"sbm",
               {{"block_sizes", {30, 30}}, {"p_in", 0.2}, {"p_out", 0.02}, {"feature_dim", 8},
                {"feature_shift", 2.0}, {"seed", 1}}}}},
            {"train",
             {{"k", 6}, {"embedding_dim", 8}, {"num_random_features", 16}, {"epochs", 20}, {"patience", 0},
              {"seed", 4}}},
            {"splits", {{"train_per_class", 10}, {"val_per_class", 5}, {"count", 3}}},
            {"output_dir", "out"}};
  }

  fs::path write_config(const nlohmann::json& j, const std::string& name = "run.json") const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, TrainsSbmEndToEndQuickly) {
  const fs::path cfg = write_config(sbm_config());
  const auto start = std::chrono::steady_clock::now();
  const CliResult r = run({"train", "--config", cfg.string()});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_LT(seconds, 60.0);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "checkpoint.gtca"));
  const auto report = nlohmann::json::parse(slurp(dir_ / "out" / "train_report.json"));
  EXPECT_EQ(report["losses"].size(), 20u);
}

TEST_F(CliTest, RerunGivesIdenticalCheckpoint) {
  const fs::path cfg = write_config(sbm_config());
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "a").string()}).code, kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "b").string(), "--jobs", "2"}).code, kExitOk);
  EXPECT_EQ(slurp(dir_ / "a" / "checkpoint.gtca"), slurp(dir_ / "b" / "checkpoint.gtca"));
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "c").string(), "--seed", "9"}).code, kExitOk);
  EXPECT_NE(slurp(dir_ / "a" / "checkpoint.gtca"), slurp(dir_ / "c" / "checkpoint.gtca"));
}

TEST_F(CliTest, MissingFeatureFileIsNamed) {
  nlohmann::json header{{"features", "absent.features.txt"}, {"edges", "absent.edges.txt"}, {"num_nodes", 3}};
  write_config(header, "graph.json");
  nlohmann::json cfg = sbm_config();
  cfg["dataset"] = {{"header", "graph.json"}};
  const CliResult r = run({"train", "--config", write_config(cfg).string()});
  EXPECT_NE(r.code, kExitOk);
  EXPECT_NE(r.err.find("absent.features.txt"), std::string::npos) << r.err;
}

TEST_F(CliTest, ConfigErrorsNameTheField) {
  nlohmann::json cfg = sbm_config();
  cfg["train"]["lamda"] = 0.5;
  CliResult r = run({"train", "--config", write_config(cfg).string()});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_NE(r.err.find("train.lamda"), std::string::npos) << r.err;

  cfg = sbm_config();
  cfg["train"]["lambda"] = 2.0;
  r = run({"train", "--config", write_config(cfg).string()});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_NE(r.err.find("train.lambda"), std::string::npos);

  cfg = sbm_config();
  cfg["train"]["k"] = 60;  // N = 60
  r = run({"train", "--config", write_config(cfg).string()});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_NE(r.err.find("train.k"), std::string::npos);

  cfg = sbm_config();
  cfg["colour"] = "blue";
  EXPECT_EQ(run({"eval", "--config", write_config(cfg).string()}).code, kExitConfigError);

  std::ofstream(dir_ / "broken.json") << "{ \"dataset\": ";
  EXPECT_EQ(run({"train", "--config", (dir_ / "broken.json").string()}).code, kExitConfigError);
  EXPECT_EQ(run({"train"}).code, kExitConfigError);
  EXPECT_EQ(run({}).code, kExitConfigError);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, NonFiniteLossFailsTheRun) {
  nlohmann::json cfg = sbm_config();
  cfg["train"]["tau_cl"] = 1e-310;
  const CliResult r = run({"train", "--config", write_config(cfg).string()});
  EXPECT_EQ(r.code, kExitRuntimeError);
  EXPECT_NE(r.err.find("non-finite loss"), std::string::npos);
}

TEST_F(CliTest, EvalAtLambdaOneMatchesGcnEmbeddings) {
  nlohmann::json cfg = sbm_config();
  cfg["train"]["lambda"] = 1.0;
  const fs::path path = write_config(cfg);
  ASSERT_EQ(run({"train", "--config", path.string()}).code, kExitOk);
  ASSERT_EQ(run({"eval", "--config", path.string()}).code, kExitOk);
  const auto eval = nlohmann::json::parse(slurp(dir_ / "out" / "eval.json"));

  const RunConfig rc = load_run_config(path);
  const Graph g = load_dataset(rc.dataset);
  const GtcaModel m = load_checkpoint(dir_ / "out" / "checkpoint.gtca").build_model();
  const Tensor h_theta = m.embed(g.features, normalize_adjacency(g)).first;
  Tape tape;
  const EvalResult direct =
      evaluate_over_splits(row_l2_normalize(tape.constant(h_theta)).value(), g.labels, make_run_splits(g, rc.splits));
  EXPECT_EQ(eval["accuracies"].get<std::vector<double>>(), direct.accuracies);
}

TEST_F(CliTest, EvalRejectsMismatchedCheckpoint) {
  const fs::path path = write_config(sbm_config());
  ASSERT_EQ(run({"train", "--config", path.string()}).code, kExitOk);
  nlohmann::json other = sbm_config();
  other["train"]["embedding_dim"] = 12;
  const CliResult r = run({"eval", "--config", write_config(other, "other.json").string(), "--checkpoint",
                           (dir_ / "out" / "checkpoint.gtca").string()});
  EXPECT_EQ(r.code, kExitRuntimeError);
  EXPECT_NE(r.err.find("embedding_dim"), std::string::npos) << r.err;
  EXPECT_NE(run({"eval", "--config", path.string(), "--checkpoint", (dir_ / "none.gtca").string()}).code, kExitOk);
}

TEST_F(CliTest, AnalyzeWorksOnUntrainedEncoders) {
  nlohmann::json cfg = sbm_config();
  cfg["analyze"] = {{"dump_sets", true}};
  ASSERT_EQ(run({"analyze", "--config", write_config(cfg).string()}).code, kExitOk);
  const auto report = nlohmann::json::parse(slurp(dir_ / "out" / "analysis.json"));
  EXPECT_FALSE(report["trained"].get<bool>());
  EXPECT_EQ(report["positives"].size(), 60u);
  const double ratio = report["correct_ratio"]["b_theta"].get<double>();
  EXPECT_GE(ratio, 0.0);
  EXPECT_LE(ratio, 1.0);
  const std::string pca = slurp(dir_ / "out" / "pca.csv");
  EXPECT_EQ(std::count(pca.begin(), pca.end(), '\n'), 61);
}

TEST_F(CliTest, LambdaSweepWritesThreeRows) {
  nlohmann::json cfg = sbm_config();
  cfg["sweep"] = {{"param", "lambda"}, {"grid", {0.0, 0.5, 1.0}}};
  ASSERT_EQ(run({"sweep", "--config", write_config(cfg).string()}).code, kExitOk);
  const std::string csv = slurp(dir_ / "out" / "sweep_lambda.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  cfg.erase("sweep");
  EXPECT_EQ(run({"sweep", "--config", write_config(cfg).string()}).code, kExitConfigError);
}

TEST_F(CliTest, AblateWritesOneRowPerVariant) {
  nlohmann::json cfg = sbm_config();
  cfg["ablate"] = {{"variants", {"full", "no_topology"}}};
  ASSERT_EQ(run({"ablate", "--config", write_config(cfg).string()}).code, kExitOk);
  const std::string csv = slurp(dir_ / "out" / "ablation.csv");
  EXPECT_EQ(csv.rfind("variant,mean,std\nfull,", 0), 0u);
  EXPECT_NE(csv.find("\nno_topology,"), std::string::npos);
}

TEST_F(CliTest, GeneratedSbmLoadsBackAndInputsStayUntouched) {
  const fs::path path = write_config(sbm_config());
  ASSERT_EQ(run({"gen-sbm", "--config", path.string(), "--out", (dir_ / "data").string()}).code, kExitOk);
  const Graph g = load_graph_header(dir_ / "data" / "sbm.json");
  EXPECT_EQ(g.num_nodes, 60u);

  nlohmann::json cfg = sbm_config();
  cfg["dataset"] = {{"header", "data/sbm.json"}};
  const fs::path from_files = write_config(cfg, "files.json");
  const std::string before = slurp(dir_ / "data" / "sbm.edges.txt") + slurp(from_files);
  ASSERT_EQ(run({"train", "--config", from_files.string()}).code, kExitOk);
  EXPECT_EQ(slurp(dir_ / "data" / "sbm.edges.txt") + slurp(from_files), before);
}

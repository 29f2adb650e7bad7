#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mgdl/cli.hpp"

namespace fs = std::filesystem;
using mgdl::cli::run;

namespace {

struct Result {
  int code;
  std::string err;
};

Result mgdl_cmd(std::vector<std::string> args) {
  args.insert(args.begin(), "mgdl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

// A scratch directory holding a small spec and a short training config.
class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() / ("mgdl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    write(root / "spec.json",
          R"({"users": 100, "funds": 48, "managers": 8, "organizations": 4, "stocks": 24, "indices": 4,
              "archetypes": 3, "days": 6})");
    write(root / "config.json", R"({"epochs": 2, "dim": 6, "layers": 1, "batch_size": 32, "max_sequence": 10})");
  }
  void TearDown() override { fs::remove_all(root); }

  std::string path(const std::string& rel) const { return (root / rel).string(); }

  void make_data(const std::string& dir = "data", const std::string& seed = "7") {
    ASSERT_EQ(mgdl_cmd({"gen-data", "--spec", path("spec.json"), "--out", path(dir), "--seed", seed}).code, 0);
  }

  fs::path root;
};

}  // namespace

TEST_F(Workspace, GenDataTwiceGivesIdenticalFiles) {
  make_data("a");
  make_data("b");
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(root / "b" / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 6u);
  make_data("c", "8");
  EXPECT_NE(slurp(root / "a" / "interactions.tsv"), slurp(root / "c" / "interactions.tsv"));
}

TEST_F(Workspace, PipelineArtifactsFeedEachOther) {
  make_data();
  EXPECT_EQ(mgdl_cmd({"build-graph", "--data", path("data"), "--out", path("graph")}).code, 0);
  EXPECT_TRUE(fs::exists(root / "graph" / "graph_stats.json"));
  // The canonical edge list can stand in for the dataset's own.
  fs::copy_file(root / "graph" / "graph.tsv", root / "data" / "graph.tsv", fs::copy_options::overwrite_existing);

  auto tr = mgdl_cmd({"train", "--data", path("data"), "--config", path("config.json"), "--out", path("run")});
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_NE(tr.err.find("epoch 2"), std::string::npos);
  const auto model = path("run/model.json");
  EXPECT_TRUE(fs::exists(root / "run" / "train_log.json"));

  ASSERT_EQ(mgdl_cmd({"eval", "--data", path("data"), "--checkpoint", model, "--out", path("eval"), "--k", "3,10"}).code, 0);
  auto metrics = nlohmann::json::parse(slurp(root / "eval" / "metrics.json"));
  EXPECT_TRUE(metrics["metrics"].contains("recall@3"));
  EXPECT_TRUE(metrics["metrics"].contains("ndcg@10"));

  ASSERT_EQ(mgdl_cmd({"probe", "--data", path("data"), "--checkpoint", model, "--out", path("probe")}).code, 0);
  EXPECT_TRUE(nlohmann::json::parse(slurp(root / "probe" / "probe.json")).contains("risk_probe"));

  ASSERT_EQ(mgdl_cmd({"export-emb", "--data", path("data"), "--checkpoint", model, "--out", path("emb")}).code, 0);
  EXPECT_EQ(slurp(root / "emb" / "embeddings.tsv").rfind("# user_id\taspect\tvector\tlabel\n", 0), 0u);
}

TEST_F(Workspace, TrainAndEvalAreReproducible) {
  make_data();
  for (const char* run_dir : {"r1", "r2"}) {
    ASSERT_EQ(mgdl_cmd({"train", "--data", path("data"), "--config", path("config.json"), "--out", path(run_dir),
                        "--seed", "5"})
                  .code,
              0);
    ASSERT_EQ(mgdl_cmd({"eval", "--data", path("data"), "--checkpoint", path(std::string(run_dir) + "/model.json"),
                        "--out", path(run_dir)})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(root / "r1" / "model.json"), slurp(root / "r2" / "model.json"));
  EXPECT_EQ(slurp(root / "r1" / "metrics.json"), slurp(root / "r2" / "metrics.json"));
}

TEST_F(Workspace, AblateWritesFourReports) {
  make_data();
  ASSERT_EQ(mgdl_cmd({"ablate", "--data", path("data"), "--config", path("config.json"), "--out", path("abl")}).code, 0);
  std::vector<std::string> variants;
  for (const char* slug : {"full", "no-con", "no-rp", "no-graph"}) {
    auto m = nlohmann::json::parse(slurp(root / "abl" / slug / "metrics.json"));
    variants.push_back(m["variant"]);
  }
  EXPECT_EQ(variants, (std::vector<std::string>{"full", "w/o Con", "w/o RP", "w/o Graph"}));
  auto summary = nlohmann::json::parse(slurp(root / "abl" / "ablation.json"));
  EXPECT_EQ(summary["reports"].size(), 4u);
  EXPECT_TRUE(summary["full_relative_gain"].contains("w/o Graph"));
}

TEST_F(Workspace, VariantFlagOverridesConfig) {
  make_data();
  ASSERT_EQ(mgdl_cmd({"train", "--data", path("data"), "--config", path("config.json"), "--variant", "no-graph",
                      "--out", path("run")})
                .code,
            0);
  auto c = mgdl::model::load_checkpoint(root / "run" / "model.json");
  EXPECT_TRUE(c.config.disable_graph);
  EXPECT_EQ(c.config.variant(), "w/o Graph");
  EXPECT_EQ(mgdl_cmd({"train", "--data", path("data"), "--variant", "no-such", "--out", path("x")}).code, 1);
}

TEST_F(Workspace, InvalidConfigIsUsageErrorNamingField) {
  make_data();
  write(root / "bad.json", R"({"epsilon": -1})");
  auto r = mgdl_cmd({"train", "--data", path("data"), "--config", path("bad.json"), "--out", path("run")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("epsilon"), std::string::npos) << r.err;
  write(root / "typo.json", R"({"epoch": 3})");
  r = mgdl_cmd({"train", "--data", path("data"), "--config", path("typo.json"), "--out", path("run")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("epoch"), std::string::npos);
  write(root / "badspec.json", R"({"funds": 0})");
  r = mgdl_cmd({"gen-data", "--spec", path("badspec.json"), "--out", path("d2")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("funds"), std::string::npos);
}

TEST_F(Workspace, UsageErrors) {
  EXPECT_EQ(mgdl_cmd({}).code, 1);
  EXPECT_EQ(mgdl_cmd({"frobnicate"}).code, 1);
  EXPECT_EQ(mgdl_cmd({"gen-data", "--out", path("d"), "--bogus", "1"}).code, 1);
  EXPECT_EQ(mgdl_cmd({"gen-data"}).code, 1);  // --out is required
  EXPECT_EQ(mgdl_cmd({"eval", "--data", path("d"), "--out", path("e")}).code, 1);  // no checkpoint
  make_data();
  EXPECT_EQ(mgdl_cmd({"train", "--data", path("data"), "--config", path("missing.json"), "--out", path("r")}).code, 1);
  EXPECT_EQ(mgdl_cmd({"--help"}).code, 0);
}

TEST_F(Workspace, DataErrorsExitTwo) {
  EXPECT_EQ(mgdl_cmd({"train", "--data", path("nowhere"), "--out", path("r")}).code, 2);
  make_data();
  ASSERT_EQ(mgdl_cmd({"train", "--data", path("data"), "--config", path("config.json"), "--out", path("run")}).code, 0);
  // A checkpoint scored against a different catalog.
  write(root / "spec2.json", R"({"users": 100, "funds": 50, "managers": 8, "organizations": 4, "stocks": 24,
                                 "indices": 4, "archetypes": 3, "days": 6})");
  ASSERT_EQ(mgdl_cmd({"gen-data", "--spec", path("spec2.json"), "--out", path("other")}).code, 0);
  auto r = mgdl_cmd({"eval", "--data", path("other"), "--checkpoint", path("run/model.json"), "--out", path("e")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("catalog mismatch"), std::string::npos) << r.err;
  write(root / "broken" / "model.json", "{not json");
  EXPECT_EQ(mgdl_cmd({"eval", "--data", path("data"), "--checkpoint", path("broken/model.json"), "--out", path("e")}).code,
            2);
  // Damaged interaction file.
  write(root / "data" / "interactions.tsv", "# user\tfund\tday\ttick\n1\tx\t0\t0\n");
  EXPECT_EQ(mgdl_cmd({"eval", "--data", path("data"), "--checkpoint", path("run/model.json"), "--out", path("e")}).code,
            2);
}

TEST_F(Workspace, DivergenceExitsThree) {
  make_data();
  write(root / "huge.json", R"({"epochs": 3, "dim": 6, "layers": 1, "learning_rate": 1e200})");
  auto r = mgdl_cmd({"train", "--data", path("data"), "--config", path("huge.json"), "--out", path("run")});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST_F(Workspace, ProbeNeedsLatents) {
  make_data();
  ASSERT_EQ(mgdl_cmd({"train", "--data", path("data"), "--config", path("config.json"), "--out", path("run")}).code, 0);
  fs::remove(root / "data" / "latents.tsv");
  EXPECT_EQ(mgdl_cmd({"probe", "--data", path("data"), "--checkpoint", path("run/model.json"), "--out", path("p")}).code,
            2);
}

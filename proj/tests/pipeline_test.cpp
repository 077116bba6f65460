#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "advmap/pipeline/stages.hpp"
#include "test_util.hpp"

#ifndef ADVMAP_CLI_PATH
#define ADVMAP_CLI_PATH "advmap"
#endif

namespace fs = std::filesystem;
using namespace advmap;
using namespace advmap::pipeline;

namespace {

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.data_dir = advmap::testing::mnist_dir().string();
  cfg.architecture = nn::ArchKind::kMlp;
  cfg.seeds = {1, 2, 3};
  cfg.train.epochs = 1;
  cfg.train_limit = 3000;
  cfg.targets = {7};
  cfg.samples = 100;
  attacks::AttackConfig fgsm;
  fgsm.kind = attacks::AttackKind::kFgsm;
  fgsm.epsilons = {0.2};
  fgsm.restarts = 20;
  fgsm.count = 10;
  attacks::AttackConfig bim = fgsm;
  bim.kind = attacks::AttackKind::kBimLinf;
  bim.epsilons = {0.15};
  cfg.attacks = {fgsm, bim};
  cfg.out = out.string();
  return cfg;
}

void write_config(const fs::path& path, const nlohmann::json& j) { io::write_text(path, j.dump(2)); }

struct CliResult {
  int status;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(ADVMAP_CLI_PATH) + " " + args + " 2> " + err.string() + " > /dev/null";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, fs::exists(err) ? io::read_text(err) : ""};
}

std::string read(const fs::path& p) { return io::read_text(p); }

}  // namespace

TEST(Config, RejectsSingleSeedAndBadThresholds) {
  ExperimentConfig cfg;
  cfg.seeds = {1};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.seeds = {1, 1};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.seeds = {1, 2};
  EXPECT_NO_THROW(cfg.validate());
  cfg.theta_low = 0.9;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  auto cfg = small_config("/tmp/x");
  cfg.delta = 3.5;
  const nlohmann::json j = cfg;
  const auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);

  nlohmann::json bad = j;
  bad["epochz"] = 3;
  EXPECT_THROW(bad.get<ExperimentConfig>(), Error);
}

TEST(Config, HashIgnoresOutputAndJobs) {
  auto a = small_config("/tmp/a");
  auto b = small_config("/tmp/b");
  b.jobs = 4;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 9;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, LoadMapsFailuresToCodes) {
  const auto dir = advmap::testing::temp_dir("config_load");
  try {
    load_config(dir / "missing.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingData);
  }
  io::write_text(dir / "broken.json", "{ \"seeds\": [1, 2");
  try {
    load_config(dir / "broken.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
}

TEST(Tables, FixedAvoidsNegativeZero) {
  EXPECT_EQ(fixed(-0.0001), "0.000");
  EXPECT_EQ(fixed(-0.5), "-0.500");
  EXPECT_EQ(fixed(0.12345, 4), "0.1235");
  EXPECT_EQ(fixed(std::nan("")), "nan");
}

TEST(Tables, CsvQuotesAndMarkdownLayout) {
  Table t;
  t.title = "T";
  t.headers = {"a", "b"};
  t.add({"x,y", "say \"hi\""});
  EXPECT_EQ(t.csv(), "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
  EXPECT_EQ(t.markdown(), "### T\n\n| a | b |\n| --- | ---: |\n| x,y | say \"hi\" |\n");
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(advmap::testing::temp_dir("pipeline"));
    auto cfg = small_config(*dir_ / "run1");
    run_all(cfg);
    cfg.out = (*dir_ / "run2").string();
    cfg.jobs = 3;
    run_all(cfg);
  }
  static void TearDownTestSuite() { delete dir_; }
  static fs::path* dir_;
};

fs::path* PipelineTest::dir_ = nullptr;

TEST_F(PipelineTest, ManifestListsExistingArtifacts) {
  RunManifest m(*dir_ / "run1");
  const auto artifacts = m.all_artifacts();
  EXPECT_GT(artifacts.size(), 10u);
  for (const auto& a : artifacts) EXPECT_TRUE(fs::exists(*dir_ / "run1" / a)) << a;
  for (const auto& s : kStageOrder) EXPECT_TRUE(m.has_stage(s)) << s;
  EXPECT_TRUE(fs::exists(*dir_ / "run1" / "timings.json"));
  EXPECT_TRUE(fs::exists(*dir_ / "run1" / "report.md"));
}

TEST_F(PipelineTest, WorkerCountDoesNotChangeOutputs) {
  for (const char* t : {"baseline", "transfer", "regions", "l2", "audit"})
    EXPECT_EQ(read(*dir_ / "run1" / "tables" / (std::string(t) + ".csv")),
              read(*dir_ / "run2" / "tables" / (std::string(t) + ".csv")))
        << t;
  EXPECT_EQ(read(*dir_ / "run1" / "manifest.json"), read(*dir_ / "run2" / "manifest.json"));
}

TEST_F(PipelineTest, ResolvedConfigOmitsOutputAndJobs) {
  const auto j = nlohmann::json::parse(read(*dir_ / "run1" / "resolved_config.json"));
  EXPECT_FALSE(j.contains("out"));
  EXPECT_FALSE(j.contains("jobs"));
  EXPECT_EQ(j.at("seeds").size(), 3u);
}

TEST_F(PipelineTest, RerunningAStageDropsLaterStages) {
  const auto out = *dir_ / "rerun";
  fs::copy(*dir_ / "run1", out, fs::copy_options::recursive);
  auto cfg = small_config(out);
  cmd_attack(cfg);
  RunManifest m(out);
  EXPECT_TRUE(m.has_stage("train"));
  EXPECT_TRUE(m.has_stage("attack"));
  EXPECT_FALSE(m.has_stage("regions"));
  EXPECT_FALSE(m.has_stage("report"));
}

TEST_F(PipelineTest, EmptyRosterGivesEmptyTables) {
  const auto out = *dir_ / "empty";
  fs::copy(*dir_ / "run1", out, fs::copy_options::recursive);
  auto cfg = small_config(out);
  cfg.attacks.clear();
  write_config(out / "cfg.json", nlohmann::json(cfg));
  const auto r = run_cli("attack --config " + (out / "cfg.json").string(), out);
  EXPECT_EQ(r.status, 0) << r.err;
  const auto csv = read(out / "tables" / "transfer.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1) << csv;
  EXPECT_EQ(run_cli("regions --config " + (out / "cfg.json").string(), out).status, 0);
  EXPECT_EQ(nlohmann::json::parse(read(out / "regions" / "index.json")).size(), 0u);
}

TEST(Cli, InvalidConfigYieldsErrorRecord) {
  const auto dir = advmap::testing::temp_dir("cli_invalid");
  auto j = nlohmann::json(small_config(dir / "out"));
  j["seeds"] = {1};
  write_config(dir / "cfg.json", j);
  const auto r = run_cli("train --config " + (dir / "cfg.json").string(), dir);
  EXPECT_EQ(r.status, 2);
  const auto rec = nlohmann::json::parse(r.err);
  EXPECT_EQ(rec.at("status"), "error");
  EXPECT_EQ(rec.at("code"), "invalid_argument");
  EXPECT_EQ(rec.at("command"), "train");
  EXPECT_EQ(rec.at("exit_code"), 2);
  EXPECT_EQ(nlohmann::json::parse(read(dir / "out" / "error.json")), rec);
}

TEST(Cli, MalformedConfigAndUsageErrors) {
  const auto dir = advmap::testing::temp_dir("cli_usage");
  io::write_text(dir / "bad.json", "{ not json");
  auto r = run_cli("train --config " + (dir / "bad.json").string(), dir);
  EXPECT_EQ(r.status, 4);
  EXPECT_EQ(nlohmann::json::parse(r.err).at("code"), "format");

  r = run_cli("train --config " + (dir / "absent.json").string(), dir);
  EXPECT_EQ(r.status, 64);
  EXPECT_EQ(nlohmann::json::parse(r.err).at("code"), "usage");

  r = run_cli("fly --config " + (dir / "bad.json").string(), dir);
  EXPECT_EQ(r.status, 64);
}

TEST(Cli, LaterStageWithoutModelsReportsMissingData) {
  const auto dir = advmap::testing::temp_dir("cli_missing");
  write_config(dir / "cfg.json", nlohmann::json(small_config(dir / "out")));
  const auto r = run_cli("attack --config " + (dir / "cfg.json").string(), dir);
  EXPECT_EQ(r.status, 3) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.err).at("code"), "missing_data");
}

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "xfer/cli.hpp"
#include "xfer/evaluation.hpp"
#include "xfer/file_util.hpp"
#include "xfer/scorers.hpp"

using namespace xfer;
using xfer::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p);
  return {bytes.begin(), bytes.end()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    xfer::synthetic::TaskSpec spec;
    manifest = xfer::synthetic::write_task(spec, dir / "task").string();
  }
  TempDir dir;
  std::string manifest;
};

}  // namespace

TEST(Cli, VersionAndUsage) {
  const auto v = run({"--version"});
  EXPECT_EQ(v.code, kExitOk);
  EXPECT_NE(v.out.find("0.3.0"), std::string::npos);
  EXPECT_NE(v.out.find("npy-1.0"), std::string::npos);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"rank", "--scores", "x.json"}).code, kExitUsage);
  EXPECT_EQ(run({"rank", "--scores", "x.json", "--scorer", "leep", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"correlate", "--scores", "a", "--manifest", "b", "--split", "c", "--out", "d", "--method", "pearson"})
                .code,
            kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, ValidateAcceptsGoodAndRejectsBadProbes) {
  const auto ok = run({"validate", "--manifest", manifest});
  EXPECT_EQ(ok.code, kExitOk) << ok.err;
  EXPECT_NE(ok.out.find("ok: 3 checkpoint(s), 6 probe set(s)"), std::string::npos) << ok.out;

  std::ofstream(dir / "task/ckpt_01/test_ood/labels.npy") << "garbage";
  const auto bad = run({"validate", "--manifest", manifest});
  EXPECT_EQ(bad.code, kExitDataError);
  EXPECT_NE(bad.err.find("ckpt_01"), std::string::npos) << bad.err;
  EXPECT_NE(bad.err.find("labels.npy"), std::string::npos) << bad.err;
  EXPECT_EQ(run({"validate", "--manifest", manifest, "--split", "train"}).code, kExitOk);
  EXPECT_EQ(run({"validate", "--manifest", (dir / "none.json").string()}).code, kExitDataError);
}

TEST_F(CliTest, ScoreWritesCompleteTable) {
  const auto out = (dir / "scores.json").string();
  const auto r = run({"score", "--manifest", manifest, "--split", "train", "--scorers", "all", "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto table = load_score_table(out);
  EXPECT_EQ(table.entry_count(), 21u);
  for (const auto& id : table.checkpoints()) {
    for (auto s : kAllScorers) EXPECT_TRUE(std::isfinite(*table.get(id, s)));
  }
  EXPECT_EQ(run({"score", "--manifest", manifest, "--split", "train", "--scorers", "nce,bogus", "--out", out}).code,
            kExitUsage);
}

TEST_F(CliTest, ScoreIsDeterministicAcrossThreadCounts) {
  const auto a = (dir / "a.json").string();
  const auto b = (dir / "b.json").string();
  ASSERT_EQ(run({"score", "--manifest", manifest, "--split", "test_ood", "--out", a, "--seed", "3"}).code, kExitOk);
  ASSERT_EQ(
      run({"score", "--manifest", manifest, "--split", "test_ood", "--out", b, "--seed", "3", "--threads", "4"}).code,
      kExitOk);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Cli, RankPrintsDescendingOrder) {
  TempDir dir;
  ScoreTable t("t", "train");
  t.set("a", ScorerId::kHScore, 0.1);
  t.set("b", ScorerId::kHScore, 0.9);
  write_file_atomic(dir / "s.json", score_table_to_json(t));
  const auto r = run({"rank", "--scores", (dir / "s.json").string(), "--scorer", "h_score"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, "b\na\n");
  EXPECT_EQ(run({"rank", "--scores", (dir / "s.json").string(), "--scorer", "nope"}).code, kExitUsage);
  EXPECT_EQ(run({"rank", "--scores", (dir / "s.json").string(), "--scorer", "gbc"}).code, kExitDataError);
}

TEST_F(CliTest, ScoreThenCorrelateMatchesInProcessPipeline) {
  const auto scores = (dir / "scores.json").string();
  const auto report_path = (dir / "report.json").string();
  ASSERT_EQ(run({"score", "--manifest", manifest, "--split", "test_ood", "--out", scores}).code, kExitOk);
  const auto r = run({"correlate", "--scores", scores, "--manifest", manifest, "--split", "test_ood", "--method",
                      "tau", "--out", report_path});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("tau-b"), std::string::npos) << r.out;

  const auto m = load_manifest(manifest);
  const auto table = score_all(m, "test_ood", kAllScorers);
  EXPECT_EQ(slurp(scores), score_table_to_json(table));
  const auto report = correlate(table, m, "test_ood", CorrelationMethod::kTauB);
  EXPECT_EQ(slurp(report_path), report_to_json(report));

  const auto missing = run({"correlate", "--scores", scores, "--manifest", manifest, "--split", "test_nowhere",
                            "--out", report_path});
  EXPECT_EQ(missing.code, kExitDataError);
  EXPECT_NE(missing.err.find("test_nowhere"), std::string::npos);
}

TEST_F(CliTest, PlotDataHasOneRowPerCell) {
  const auto scores = (dir / "scores.json").string();
  ASSERT_EQ(run({"score", "--manifest", manifest, "--split", "train", "--scorers", "leep,logme", "--out", scores}).code,
            kExitOk);
  const auto csv = (dir / "plot.csv").string();
  ASSERT_EQ(run({"plot-data", "--scores", scores, "--manifest", manifest, "--split", "test_id", "--out", csv}).code,
            kExitOk);
  std::ifstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 1 + 3 * 2);
}

TEST(Cli, PlanHpoWritesConfigs) {
  TempDir dir;
  const auto r = run({"plan-hpo", "--n", "75", "--lr-min", "1e-4", "--lr-max", "1e-1", "--wd-min", "1e-6", "--wd-max",
                      "1e-4", "--skip", "20", "--out", (dir / "plan").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "plan")) {
    if (e.path().filename().string().rfind("config_", 0) == 0) ++files;
  }
  EXPECT_EQ(files, 75);
  EXPECT_EQ(run({"plan-hpo", "--lr-min", "1", "--lr-max", "0.5", "--out", (dir / "p2").string()}).code, kExitUsage);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "commands.hpp"
#include "mcdrive/error.hpp"
#include "mcdrive/evalkit.hpp"
#include "mcdrive/monitor.hpp"
#include "run_config.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace mcdrive;
using namespace mcdrive::cli;

namespace {

int run(std::initializer_list<std::string> args) {
  std::vector<std::string> store{"mcdrive"};
  store.insert(store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : store) argv.push_back(s.data());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_entries(const fs::path& dir) {
  std::size_t n = 0;
  for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) ++n;
  return n;
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("mcdrive_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run({"collect", "--frames", "150", "--seed", "4", "--out", (root_ / "D").string()}), 0);
    ASSERT_EQ(run({"train", "--data", (root_ / "D").string(), "--arch", "classification", "--preset",
                   "fast", "--epochs", "1", "--seed", "1", "--out", (root_ / "m.bin").string()}),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path root_;
};

fs::path CliPipeline::root_;

}  // namespace

TEST(RunConfigTest, RoundTripsThroughJson) {
  RunConfig c;
  c.seed = 99;
  c.track = "serpentine";
  c.tau = 0.5;
  c.thresholds = {{"mi", 0.25}, {"vr", -std::numeric_limits<double>::infinity()}};
  c.n_list = {3};
  const RunConfig back = from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(*back.tau, 0.5);
}

TEST(RunConfigTest, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(from_json(R"({"epochz": 3})"), FormatError);
  EXPECT_THROW(from_json(R"({"epochs": "many"})"), FormatError);
  EXPECT_THROW(from_json("[1, 2]"), FormatError);
  EXPECT_THROW(from_json("{"), FormatError);
}

TEST(RunConfigTest, PartialConfigKeepsDefaults) {
  const RunConfig c = from_json(R"({"epochs": 7})");
  EXPECT_EQ(c.epochs, 7);
  EXPECT_EQ(c.track, RunConfig{}.track);
  EXPECT_EQ(c.passes, RunConfig{}.passes);
}

TEST(CliTest, UsageErrorsExitTwoWithoutOutputs) {
  const fs::path dir = fs::temp_directory_path() / "mcdrive_cli_usage";
  fs::remove_all(dir);
  fs::create_directories(dir);
  EXPECT_EQ(run({"train", "--no-such-flag", "--out", (dir / "m.bin").string()}), kExitUsage);
  EXPECT_EQ(run({"teleport"}), kExitUsage);
  EXPECT_EQ(run({}), kExitUsage);
  EXPECT_EQ(run({"train", "--epochs", "lots", "--out", (dir / "m.bin").string()}), kExitUsage);
  EXPECT_EQ(count_entries(dir), 0u);
  fs::remove_all(dir);
}

TEST(CliTest, HelpExitsZero) {
  EXPECT_EQ(run({"--help"}), kExitOk);
  EXPECT_EQ(run({"drive", "--help"}), kExitOk);
}

TEST(CliTest, MissingFilesExitOne) {
  const fs::path dir = fs::temp_directory_path() / "mcdrive_cli_missing";
  fs::remove_all(dir);
  EXPECT_EQ(run({"report", "--model", (dir / "none.bin").string(), "--data", dir.string()}),
            kExitFailure);
  EXPECT_EQ(run({"train", "--data", (dir / "none").string(), "--out", (dir / "m.bin").string()}),
            kExitFailure);
  EXPECT_EQ(run({"train", "--config", (dir / "none.json").string()}), kExitFailure);
  EXPECT_FALSE(fs::exists(dir));
}

TEST_F(CliPipeline, CollectWritesSplitAndConfig) {
  EXPECT_TRUE(fs::exists(root_ / "D" / "train" / "meta.json"));
  EXPECT_TRUE(fs::exists(root_ / "D" / "test" / "states.csv"));
  EXPECT_FALSE(fs::exists(root_ / "D" / "train" / "states.csv"));
  const RunConfig c = load_config(root_ / "D" / "config.json");
  EXPECT_EQ(c.frames, 150u);
  EXPECT_EQ(c.seed, 4u);
}

TEST_F(CliPipeline, TrainWritesModelLossAndResolvedConfig) {
  EXPECT_TRUE(fs::exists(root_ / "m.bin"));
  const std::string loss = slurp(root_ / "m.loss.csv");
  EXPECT_EQ(loss.rfind("epoch,loss\n0,", 0), 0u);
  const RunConfig c = load_config(root_ / "m.config.json");
  EXPECT_EQ(c.epochs, 1);
  EXPECT_EQ(c.arch, "classification");
}

TEST_F(CliPipeline, RerunFromResolvedConfigIsByteIdentical) {
  ASSERT_EQ(run({"train", "--config", (root_ / "m.config.json").string(), "--out",
                 (root_ / "again.bin").string()}),
            0);
  EXPECT_EQ(slurp(root_ / "m.bin"), slurp(root_ / "again.bin"));
  EXPECT_EQ(slurp(root_ / "m.loss.csv"), slurp(root_ / "again.loss.csv"));
}

TEST_F(CliPipeline, FlagsOverrideConfig) {
  RunConfig c = load_config(root_ / "m.config.json");
  c.epochs = 9;
  write_config(c, root_ / "over.json");
  ASSERT_EQ(run({"train", "--config", (root_ / "over.json").string(), "--epochs", "2", "--out",
                 (root_ / "over.bin").string()}),
            0);
  EXPECT_EQ(load_config(root_ / "over.config.json").epochs, 2);
}

TEST_F(CliPipeline, EvalStaticWritesOneRocPerMeasure) {
  const fs::path out = root_ / "roc";
  ASSERT_EQ(run({"eval-static", "--model", (root_ / "m.bin").string(), "--data",
                 (root_ / "D").string(), "--sample", "20", "--passes", "8", "--oracle", "line",
                 "--out", out.string()}),
            0);
  for (const char* m : {"vr", "entropy", "mi"}) {
    EXPECT_FALSE(read_roc_csv(out / (std::string("roc_") + m + ".csv")).empty()) << m;
  }
  EXPECT_FALSE(fs::exists(out / "roc_variance.csv"));
  const std::string summary = slurp(out / "summary.json");
  EXPECT_NE(summary.find("\"auc\""), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "config.json"));
}

TEST_F(CliPipeline, DriveTraceIsReproducible) {
  const std::vector<std::string> base = {"drive", "--model", (root_ / "m.bin").string(),
                                         "--duration", "3", "--passes", "4", "--seed", "5"};
  auto go = [&](const fs::path& out) {
    std::vector<std::string> store{"mcdrive"};
    store.insert(store.end(), base.begin(), base.end());
    store.push_back("--out");
    store.push_back(out.string());
    std::vector<char*> argv;
    for (auto& s : store) argv.push_back(s.data());
    return dispatch(static_cast<int>(argv.size()), argv.data());
  };
  ASSERT_EQ(go(root_ / "t1.csv"), 0);
  ASSERT_EQ(go(root_ / "t2.csv"), 0);
  EXPECT_EQ(slurp(root_ / "t1.csv"), slurp(root_ / "t2.csv"));
  EXPECT_TRUE(fs::exists(root_ / "t1.json"));
  EXPECT_TRUE(fs::exists(root_ / "t1.config.json"));
  EXPECT_EQ(load_trace(root_ / "t1.csv").rows.size(), 18u);
}

TEST_F(CliPipeline, ReportWritesJson) {
  ASSERT_EQ(run({"report", "--model", (root_ / "m.bin").string(), "--data", (root_ / "D").string(),
                 "--passes", "4", "--out", (root_ / "report.json").string()}),
            0);
  EXPECT_NE(slurp(root_ / "report.json").find("accuracy_mc"), std::string::npos);
}

TEST(PlotTest, PerfectRocPassesThroughTopLeft) {
  std::vector<RocPoint> pts = {{std::numeric_limits<double>::infinity(), 0, 0},
                               {0.9, 1, 0},
                               {-std::numeric_limits<double>::infinity(), 1, 1}};
  EXPECT_DOUBLE_EQ(polyline_auc(pts), 1.0);
  const std::string svg = roc_svg({{"perfect", pts}});
  // Plot area spans x 64..616 and y 40..424, so (fpr 0, tpr 1) is (64, 40).
  EXPECT_NE(svg.find("64.00,40.00"), std::string::npos);
  EXPECT_NE(svg.find("AUC 1.00"), std::string::npos);
  EXPECT_EQ(svg, roc_svg({{"perfect", pts}}));
}

TEST(PlotTest, TraceMarksCrashFrame) {
  std::vector<TraceRow> rows(11);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].frame = static_cast<std::int64_t>(i);
    rows[i].measures[static_cast<std::size_t>(Measure::MutualInformation)] = 0.1 * i;
  }
  rows[5].crashed = true;
  const std::string svg = trace_svg(rows, Measure::MutualInformation, 0.5, "t");
  // Frame 5 of 0..10 sits halfway across the plot area: 64 + 276 = 340.
  EXPECT_NE(svg.find("class=\"crash\" x1=\"340.00\""), std::string::npos);
  EXPECT_NE(svg.find("stroke=\"red\""), std::string::npos);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(svg.find("class=\"threshold\""), std::string::npos);
  EXPECT_THROW(trace_svg(rows, Measure::Variance, std::nullopt, "t"), FormatError);
}

TEST(PlotTest, EmptyCsvIsAnErrorAndWritesNothing) {
  const fs::path dir = fs::temp_directory_path() / "mcdrive_plot_empty";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "roc.csv") << "threshold,tpr,fpr\n";
  std::ofstream(dir / "trace.csv") << "frame,t,angle_deg,vr,entropy,mi,variance,crashed,alert\n";
  std::ofstream(dir / "blank.csv");
  EXPECT_EQ(run({"plot", "--roc", (dir / "roc.csv").string(), "--out", (dir / "a.svg").string()}),
            kExitFailure);
  EXPECT_EQ(run({"plot", "--trace", (dir / "trace.csv").string(), "--out", (dir / "b.svg").string()}),
            kExitFailure);
  EXPECT_EQ(run({"plot", "--roc", (dir / "blank.csv").string(), "--out", (dir / "c.svg").string()}),
            kExitFailure);
  EXPECT_FALSE(fs::exists(dir / "a.svg"));
  EXPECT_FALSE(fs::exists(dir / "b.svg"));
  EXPECT_FALSE(fs::exists(dir / "c.svg"));
  fs::remove_all(dir);
}

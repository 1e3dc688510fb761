#include "avgk/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "avgk/error.hpp"

namespace avgk {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "avgk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("avgk_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    ::setenv("AVGK_RESULTS_DIR", root_.c_str(), 1);
  }
  void TearDown() override {
    ::unsetenv("AVGK_RESULTS_DIR");
    fs::remove_all(root_);
  }

  void generate_small() {
    const CliResult r = cli({"generate", "--classes", "6", "--superclasses", "3", "--spread", "4",
                             "--n", "600", "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  std::vector<std::string> quick_train(std::vector<std::string> extra = {}) {
    std::vector<std::string> a{"train", "--k", "2", "--epochs", "2", "--hidden", "8", "--batch", "32"};
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  }

  fs::path root_;
};

TEST(ResultsRoot, FollowsEnvironment) {
  ::setenv("AVGK_RESULTS_DIR", "/tmp/somewhere", 1);
  EXPECT_EQ(results_root(), fs::path("/tmp/somewhere"));
  ::unsetenv("AVGK_RESULTS_DIR");
  EXPECT_EQ(results_root(), fs::path("results"));
}

TEST(LrSchedule, ParseAndFormat) {
  const auto steps = parse_lr_schedule("150:10,225:10");
  ASSERT_EQ(steps.size(), 2u);
  EXPECT_EQ(steps[0], (LrStep{150, 10.0}));
  EXPECT_EQ(format_lr_schedule(steps), "150:10,225:10");
  EXPECT_TRUE(parse_lr_schedule("").empty());
  EXPECT_THROW(parse_lr_schedule("150"), InvalidConfig);
  EXPECT_THROW(parse_lr_schedule("a:b"), InvalidConfig);
}

TEST(MeanCi95, SampleStandardError) {
  const auto [mean, ci] = mean_ci95({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(mean, 2.5);
  EXPECT_NEAR(ci, 1.96 * std::sqrt(5.0 / 3.0) / 2.0, 1e-12);
  EXPECT_EQ(mean_ci95({0.7}).second, 0.0);
}

TEST(Summarize, GroupsBySeedFreeConfig) {
  const auto rec = [](double alpha, int seed, double acc) {
    return nlohmann::json{{"config", {{"alpha", alpha}, {"seed", seed}}},
                          {"metrics", {{"avg_k_accuracy", acc}, {"mean_set_size", 2.0}}}};
  };
  const auto rows = summarize({rec(0.1, 1, 0.8), rec(0.3, 1, 0.5), rec(0.1, 2, 0.6)});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].n, 2u);
  EXPECT_DOUBLE_EQ(rows[0].mean, 0.7);
  EXPECT_FALSE(rows[0].config.contains("seed"));
  EXPECT_EQ(rows[1].n, 1u);
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  generate_small();
  const CliResult bad_loss = cli(quick_train({"--loss", "bogus"}));
  EXPECT_EQ(bad_loss.code, 2);
  EXPECT_NE(bad_loss.err.find("avgk"), std::string::npos);
  EXPECT_EQ(cli(quick_train({"--k", "6"})).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(CliTest, RuntimeFailureExitsWithOne) {
  const CliResult r = cli(quick_train({"--data", (root_ / "missing").string()}));
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, GenerateIsDeterministic) {
  generate_small();
  const std::string first = slurp(root_ / "dataset" / "data.csv");
  const std::string manifest = slurp(root_ / "dataset" / "manifest.json");
  ASSERT_EQ(cli({"generate", "--classes", "6", "--superclasses", "3", "--spread", "4", "--n", "600",
                 "--seed", "3", "--out", (root_ / "again").string()})
                .code,
            0);
  EXPECT_EQ(slurp(root_ / "again" / "data.csv"), first);
  EXPECT_EQ(slurp(root_ / "again" / "manifest.json"), manifest);
  const DatasetFiles d = load_dataset(root_ / "dataset");
  EXPECT_EQ(d.split.val.labels.size(), 60u);
  EXPECT_EQ(d.split.test.labels.size(), 120u);
  EXPECT_EQ(d.split.train.labels.size(), 420u);
}

TEST_F(CliTest, TrainWritesRecordAndEvaluateAgrees) {
  generate_small();
  const CliResult r = cli(quick_train({"--out", (root_ / "run").string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint.bin", "train_log.jsonl", "record.json", "histogram.csv"}) {
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  }
  const auto records = read_records(root_ / "records.jsonl");
  ASSERT_EQ(records.size(), 1u);
  const auto& rec = records[0];
  for (const char* key : {"config", "config_hash", "best_epoch", "epochs_run", "val_avg_k_accuracy",
                          "metrics", "provenance"}) {
    EXPECT_TRUE(rec.contains(key)) << key;
  }
  EXPECT_EQ(rec.at("provenance").at("code_version"), kCodeVersion);
  EXPECT_EQ(rec.at("provenance").at("dataset_manifest_hash"),
            fnv1a_hex(slurp(root_ / "dataset" / "manifest.json")));
  EXPECT_EQ(rec.at("epochs_run"), 2);

  std::size_t rows = 0;
  std::istringstream hist(slurp(root_ / "run" / "histogram.csv"));
  std::string line;
  std::getline(hist, line);
  EXPECT_EQ(line, "size,count");
  while (std::getline(hist, line)) rows += std::stoul(line.substr(line.find(',') + 1));
  EXPECT_EQ(rows, 120u);

  const CliResult ev = cli({"evaluate", "--checkpoint", (root_ / "run" / "checkpoint.bin").string(),
                            "--k", "2", "--oracle"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto j = nlohmann::json::parse(ev.out);
  EXPECT_EQ(j.at("metrics"), rec.at("metrics"));
  EXPECT_TRUE(j.contains("bayes"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "eval" / "histogram.csv"));
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  generate_small();
  {
    std::ofstream os(root_ / "train.cfg");
    os << "alpha=0.7\nk=3\nepochs=1\nhidden=8\n";
  }
  ASSERT_EQ(cli({"train", "--config", (root_ / "train.cfg").string(), "--k", "2"}).code, 0);
  const auto rec = read_records(root_ / "records.jsonl").at(0);
  EXPECT_EQ(rec.at("config").at("alpha"), 0.7);
  EXPECT_EQ(rec.at("config").at("k"), 2);
  {
    std::ofstream os(root_ / "bad.cfg");
    os << "alpah=0.7\n";
  }
  EXPECT_EQ(cli({"train", "--config", (root_ / "bad.cfg").string()}).code, 2);
}

TEST_F(CliTest, SweepRunsEveryCellInOrder) {
  generate_small();
  const CliResult r = cli({"sweep", "--axis", "batch", "--values", "16,64", "--seeds", "1,2",
                           "--jobs", "3", "--k", "2", "--epochs", "1", "--hidden", "8", "--batch",
                           "32", "--lr", "0.1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto records = read_records(root_ / "records.jsonl");
  ASSERT_EQ(records.size(), 4u);
  EXPECT_EQ(records[0].at("config").at("batch"), 16);
  EXPECT_EQ(records[0].at("config").at("seed"), 1);
  EXPECT_EQ(records[1].at("config").at("seed"), 2);
  EXPECT_DOUBLE_EQ(records[0].at("config").at("lr").get<double>(), 0.05);
  EXPECT_DOUBLE_EQ(records[3].at("config").at("lr").get<double>(), 0.2);
  bool found = false;
  for (const auto& e : fs::recursive_directory_iterator(root_ / "sweeps")) {
    if (e.path().filename() == "plot_batch.csv") found = true;
  }
  EXPECT_TRUE(found);

  ASSERT_EQ(cli({"summarize"}).code, 0);
  std::istringstream summary(slurp(root_ / "summary.csv"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(summary, line)) ++n;
  EXPECT_EQ(n, 3u);
}

TEST_F(CliTest, SweepIsIndependentOfThreadCount) {
  generate_small();
  const std::vector<std::string> base{"sweep", "--axis", "alpha", "--values", "0.1,1", "--seeds", "1,2",
                                      "--k", "2", "--epochs", "1", "--hidden", "8"};
  auto one = base;
  one.insert(one.end(), {"--jobs", "1"});
  ASSERT_EQ(cli(one).code, 0);
  const std::string serial = slurp(root_ / "records.jsonl");
  fs::remove(root_ / "records.jsonl");
  auto many = base;
  many.insert(many.end(), {"--jobs", "4"});
  ASSERT_EQ(cli(many).code, 0);
  EXPECT_EQ(slurp(root_ / "records.jsonl"), serial);
}

TEST_F(CliTest, IngestCreatesDataset) {
  fs::create_directories(root_);
  {
    std::ofstream os(root_ / "in.csv");
    os << "a,b,label\n";
    for (int i = 0; i < 40; ++i) os << i * 0.5 << ',' << -i << ',' << i % 4 << '\n';
  }
  const CliResult r = cli({"ingest", (root_ / "in.csv").string(), "--out", (root_ / "ds").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const DatasetFiles d = load_dataset(root_ / "ds");
  EXPECT_EQ(d.split.num_classes, 4u);
  EXPECT_FALSE(d.spec.has_value());
  EXPECT_EQ(d.split.test.labels.size(), 8u);
}

}  // namespace
}  // namespace avgk

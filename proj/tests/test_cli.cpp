#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rots/cli.hpp"

using namespace rots;
using cli::json;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("rots_cli_" + std::to_string(getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path write_json(const std::string& name, const json& j) const { return write(name, j.dump()); }

  static std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Runs the CLI with stdout/stderr captured; returns the exit status.
  int run(const std::string& args) {
    const std::string cmd = std::string(ROTS_CLI_PATH) + " " + args + " >" + path("stdout.txt").string() + " 2>" +
                            path("stderr.txt").string();
    const int st = std::system(cmd.c_str());
    out_ = read(path("stdout.txt"));
    err_ = read(path("stderr.txt"));
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  }

  json small_config(const std::string& method, const std::string& out) const {
    return json{{"dataset",
                 {{"train", {{"synth", {{"n", 20}, {"length", 16}, {"noise", 0.1}, {"seed", 1}}}}},
                  {"test", {{"synth", {{"n", 20}, {"length", 16}, {"noise", 0.1}, {"seed", 2}}}}}}},
                {"arch", "C:4,K:3;P:2"},
                {"method", method},
                {"trainer", {{"optimizer", "sgd"}, {"eta", 0.05}, {"batch", 5}, {"iterations", 30}}},
                {"rots", {{"lambda", 0.0}, {"gamma", 0.0}, {"eta", 0.05}, {"batch", 5}, {"K", 30}}},
                {"seeds", {3}},
                {"out", path(out).string()}};
  }

  fs::path dir_;
  std::string out_, err_;
};

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

void expect_validation(const json& j, const std::string& fragment) {
  try {
    cli::ExperimentConfig::parse(j);
    ADD_FAILURE() << "accepted " << j.dump();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation) << e.what();
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Config, DefaultsFromEmptyObject) {
  const auto c = cli::ExperimentConfig::parse(json::object());
  EXPECT_EQ(c.method, cli::Method::clean);
  EXPECT_EQ(c.arch, std::string(kDefaultArch));
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{0});
  EXPECT_EQ(c.threads, 1u);
  EXPECT_EQ(c.eval.size(), 2u);
  EXPECT_FALSE(c.train_data.has_value());
}

TEST(Config, UnknownKeysRejectedWithFieldPath) {
  expect_validation(json{{"lr", 1}}, "config.lr: unknown key");
  expect_validation(json{{"rots", {{"lamda", 1}}}}, "config.rots.lamda: unknown key");
  expect_validation(json{{"dataset", {{"train", {{"synth", {{"len", 4}}}}}}}}, "config.dataset.train.synth.len");
  expect_validation(json{{"eval", {{"attacks", {{"cw", json::object()}}}}}}, "config.eval.attacks.cw");
}

TEST(Config, TypeAndRangeErrorsNameTheField) {
  expect_validation(json{{"rots", {{"lambda", "big"}}}}, "config.rots.lambda: expected a number");
  expect_validation(json{{"trainer", {{"batch", -2}}}}, "config.trainer.batch");
  expect_validation(json{{"seeds", json::array()}}, "config.seeds");
  expect_validation(json{{"method", "magic"}}, "config.method");
  expect_validation(json{{"arch", "Q:3"}}, "config.arch");
  expect_validation(json{{"plbench", {{"nu_syn", -1.0}}}}, "plbench.nu_syn");
  expect_validation(json{{"rots", {{"beta", 2.0}}}}, "config.rots");
  expect_validation(json{{"rots", {{"band", true}}}}, "config.rots.band");
  expect_validation(json{{"dataset", {{"train", {{"format", "ucr"}}}}}}, "exactly one of path or synth");
}

TEST(Config, ParsesBlocks) {
  const auto c = cli::ExperimentConfig::parse(json{
      {"method", "rots"},
      {"rots", {{"lambda", 0.5}, {"nu", 2.0}, {"band", 3}, {"p", "l1"}, {"align_mode", "exhaustive"}}},
      {"eval", {{"repeats", 4}, {"attacks", {{"pgd", {{"levels", {0, 0.3}}, {"steps", 7}}}}}}},
      {"seeds", {5, 6}},
      {"threads", 2}});
  EXPECT_EQ(c.method, cli::Method::rots);
  EXPECT_EQ(c.rots.lambda, 0.5);
  EXPECT_EQ(*c.rots.nu, 2.0);
  EXPECT_EQ(c.rots.band.mode, BandSetting::Mode::fixed);
  EXPECT_EQ(c.rots.p, Norm::l1);
  EXPECT_EQ(c.rots.align_mode, AlignMode::exhaustive);
  ASSERT_EQ(c.eval.size(), 1u);
  EXPECT_EQ(c.eval[0].spec.kind, AttackKind::pgd);
  EXPECT_EQ(c.eval[0].spec.steps, 7u);
  EXPECT_EQ(c.eval[0].levels, (Vec{0.0, 0.3}));
  EXPECT_EQ(c.repeats, 4u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{5, 6}));
}

TEST(Config, MissingDatasetFileIsIoError) {
  try {
    cli::ExperimentConfig::parse(json{{"dataset", {{"train", {{"path", "/nonexistent/x.tsv"}}}}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
    EXPECT_EQ(exit_code(e.kind()), 3);
  }
}

TEST_F(CliTest, TrainCleanWritesRunDirectory) {
  const auto cfg = write_json("c.json", small_config("clean", "run"));
  ASSERT_EQ(run("train --config " + cfg.string()), 0) << err_;
  const auto seed_dir = path("run") / "seed_3";
  EXPECT_TRUE(fs::exists(seed_dir / "checkpoint.txt"));
  EXPECT_TRUE(fs::exists(seed_dir / "trace.csv"));
  const auto trace = read(seed_dir / "trace.csv");
  EXPECT_EQ(csv_rows(trace).size(), 31u);
  const auto m = json::parse(read(seed_dir / "manifest.json"));
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["version"], std::string(cli::kVersion));
  EXPECT_EQ(m["config"]["method"], "clean");
  EXPECT_EQ(m["config_hash"], "fnv1a64:" + cli::hex64(fnv1a(m["config"].dump())));
  const auto ck = Checkpoint::load((seed_dir / "checkpoint.txt").string());
  EXPECT_EQ(ck.arch, "C:4,K:3;P:2;D:2");
  EXPECT_EQ(ck.iteration, 30u);
}

TEST_F(CliTest, RerunIsByteIdenticalIncludingFromManifest) {
  const auto cfg = write_json("c.json", small_config("clean", "a"));
  ASSERT_EQ(run("train --config " + cfg.string()), 0) << err_;
  ASSERT_EQ(run("train --config " + cfg.string() + " --out " + path("b").string()), 0) << err_;
  const auto ta = read(path("a") / "seed_3" / "trace.csv");
  EXPECT_EQ(ta, read(path("b") / "seed_3" / "trace.csv"));
  EXPECT_EQ(read(path("a") / "seed_3" / "checkpoint.txt"), read(path("b") / "seed_3" / "checkpoint.txt"));

  auto echo = json::parse(read(path("a") / "seed_3" / "manifest.json"))["config"];
  echo["out"] = path("c").string();
  const auto again = write_json("echo.json", echo);
  ASSERT_EQ(run("train --config " + again.string()), 0) << err_;
  EXPECT_EQ(ta, read(path("c") / "seed_3" / "trace.csv"));
}

TEST_F(CliTest, SeedFlagOverridesSeedList) {
  auto j = small_config("clean", "run");
  j["seeds"] = {1, 2, 3};
  const auto cfg = write_json("c.json", j);
  ASSERT_EQ(run("train --config " + cfg.string() + " --seed 9"), 0) << err_;
  EXPECT_TRUE(fs::exists(path("run") / "seed_9" / "trace.csv"));
  EXPECT_FALSE(fs::exists(path("run") / "seed_1"));
  EXPECT_EQ(json::parse(read(path("run") / "seed_9" / "manifest.json"))["config"]["seeds"], json({9}));
}

TEST_F(CliTest, RotsWithZeroLambdaGammaMatchesCleanSgdTrace) {
  ASSERT_EQ(run("train --config " + write_json("a.json", small_config("clean", "clean")).string()), 0) << err_;
  ASSERT_EQ(run("train --config " + write_json("b.json", small_config("rots", "rots")).string()), 0) << err_;
  EXPECT_EQ(read(path("clean") / "seed_3" / "trace.csv"), read(path("rots") / "seed_3" / "trace.csv"));
  EXPECT_EQ(Checkpoint::load((path("clean") / "seed_3" / "checkpoint.txt").string()).weights,
            Checkpoint::load((path("rots") / "seed_3" / "checkpoint.txt").string()).weights);
}

TEST_F(CliTest, BaselineMethodsTrain) {
  for (const std::string method : {"adv_fgs", "adv_pgd", "stn"}) {
    auto j = small_config(method, method);
    j["trainer"]["iterations"] = 5;
    j["attack"] = {{"epsilon", 0.1}, {"steps", 3}};
    ASSERT_EQ(run("train --config " + write_json(method + ".json", j).string()), 0) << method << ": " << err_;
    EXPECT_TRUE(fs::exists(path(method) / "seed_3" / "checkpoint.txt"));
  }
}

TEST_F(CliTest, DivergenceExitsTwoWithPartialTrace) {
  auto j = small_config("clean", "run");
  j["trainer"]["eta"] = 1e308;
  ASSERT_EQ(run("train --config " + write_json("c.json", j).string()), 2) << err_;
  EXPECT_TRUE(fs::exists(path("run") / "seed_3" / "trace.csv"));
  EXPECT_NE(err_.find("partial trace"), std::string::npos);
}

TEST_F(CliTest, EvalLevelZeroIsCleanAccuracy) {
  auto j = small_config("clean", "run");
  j["eval"] = {{"repeats", 5}, {"attacks", {{"gaussian", {{"levels", {0}}}}}}};
  const auto cfg = write_json("c.json", j);
  ASSERT_EQ(run("train --config " + cfg.string()), 0) << err_;
  ASSERT_EQ(run("eval --config " + cfg.string()), 0) << err_;
  const auto rows = csv_rows(read(path("run") / "eval_gaussian.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"level", "mean_acc", "min_acc", "max_acc"}));

  const Model m = Checkpoint::load((path("run") / "seed_3" / "checkpoint.txt").string()).to_model();
  const auto test = synth_two_class(20, 16, 0.1, 2);
  std::size_t correct = 0;
  for (const auto& s : test.samples) correct += argmax(m.forward(s.values)) == s.label;
  const double clean = double(correct) / test.size();
  for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(std::stod(rows[1][k]), clean);
  EXPECT_FALSE(fs::exists(path("run") / "eval_fgs.csv"));
}

TEST_F(CliTest, EvalThreeAttacksAcrossTenSeeds) {
  auto j = small_config("clean", "run");
  j["seeds"] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  j["trainer"]["iterations"] = 10;
  j["eval"] = {{"repeats", 2},
               {"attacks",
                {{"gaussian", {{"levels", {0, 0.5}}}},
                 {"fgs", {{"levels", {0, 0.3}}}},
                 {"pgd", {{"levels", {0, 0.3}}, {"steps", 3}}}}}};
  const auto cfg = write_json("c.json", j);
  ASSERT_EQ(run("train --config " + cfg.string()), 0) << err_;
  ASSERT_EQ(run("eval --config " + cfg.string() + " --threads 2"), 0) << err_;
  for (const std::string kind : {"gaussian", "fgs", "pgd"}) {
    const auto rows = csv_rows(read(path("run") / ("eval_" + kind + ".csv")));
    ASSERT_EQ(rows.size(), 3u) << kind;
    double mean_of_means = 0.0;
    for (int s = 0; s < 10; ++s) {
      const auto per = csv_rows(read(path("run") / ("seed_" + std::to_string(s)) / ("eval_" + kind + ".csv")));
      mean_of_means += std::stod(per[2][1]) / 10.0;
    }
    EXPECT_NEAR(std::stod(rows[2][1]), mean_of_means, 1e-12) << kind;
    EXPECT_LE(std::stod(rows[2][2]), std::stod(rows[2][1]));
    EXPECT_LE(std::stod(rows[2][1]), std::stod(rows[2][3]));
  }
  EXPECT_TRUE(fs::exists(path("run") / "eval_manifest.json"));
}

TEST_F(CliTest, EvalArchMismatchIsLoadError) {
  const auto cfg = write_json("c.json", small_config("clean", "run"));
  ASSERT_EQ(run("train --config " + cfg.string()), 0) << err_;
  auto j = small_config("clean", "run");
  j["arch"] = "C:5,K:3;P:2";
  EXPECT_EQ(run("eval --config " + write_json("d.json", j).string()), 1);
  EXPECT_NE(err_.find("architecture"), std::string::npos);
  EXPECT_EQ(run("eval --config " + cfg.string() + " --checkpoint " + path("missing.txt").string()), 3);
}

TEST_F(CliTest, DistanceIdenticalFilesGiveZeroDtw) {
  const auto a = write("a.txt", "0.5 1.5 -2 3\n");
  ASSERT_EQ(run("distance " + a.string() + " " + a.string()), 0) << err_;
  const auto rows = csv_rows(out_);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"dtw", "k_gak", "d_gak", "prop1_gap", "prop1_bound"}));
  EXPECT_EQ(std::stod(rows[1][0]), 0.0);
}

TEST_F(CliTest, DistanceTwoPointExample) {
  const auto a = write("a.txt", "0 0\n");
  const auto b = write("b.txt", "1 1\n");
  ASSERT_EQ(run("distance " + a.string() + " " + b.string() + " --nu 1 --p 1"), 0) << err_;
  const auto row = csv_rows(out_).at(1);
  EXPECT_EQ(std::stod(row[0]), 2.0);
  EXPECT_NEAR(std::stod(row[1]), std::exp(-2.0) + 2.0 * std::exp(-3.0), 1e-12);
  EXPECT_NEAR(std::stod(row[2]), 1.4486, 1e-4);
  EXPECT_NEAR(std::stod(row[3]), 0.5514, 1e-4);
  EXPECT_NEAR(std::stod(row[4]), std::log(3.0), 1e-12);
}

TEST_F(CliTest, DistanceProp1BeyondGuardIsSizeError) {
  std::string line;
  for (int t = 0; t < 13; ++t) line += std::to_string(t % 3) + " ";
  const auto a = write("a.txt", line + "\n");
  ASSERT_EQ(run("distance " + a.string() + " " + a.string()), 0) << err_;
  EXPECT_EQ(csv_rows(out_).at(1).at(3), "");
  EXPECT_EQ(run("distance " + a.string() + " " + a.string() + " --prop1"), 1);
  EXPECT_NE(err_.find("size error"), std::string::npos);
}

TEST_F(CliTest, DistanceParseAndIoErrors) {
  const auto a = write("a.txt", "1 x 3\n");
  EXPECT_EQ(run("distance " + a.string() + " " + a.string()), 3);
  EXPECT_EQ(run("distance " + path("none.txt").string() + " " + a.string()), 3);
}

TEST_F(CliTest, BenchPlSummaryAndDeterminism) {
  const auto cfg = write_json("p.json", json{{"plbench", {{"K", 2000}, {"eta", 5e-3}, {"trace_rows", 20}}}});
  ASSERT_EQ(run("bench-pl --config " + cfg.string() + " --seed 4 --out " + path("a").string()), 0) << err_;
  ASSERT_EQ(run("bench-pl --config " + cfg.string() + " --seed 4 --out " + path("b").string()), 0) << err_;
  const auto summary = csv_rows(read(path("a") / "seed_4" / "summary.csv"));
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0][0], "P_star");
  EXPECT_TRUE(std::isfinite(std::stod(summary[1][0])));
  EXPECT_EQ(read(path("a") / "seed_4" / "trace.csv"), read(path("b") / "seed_4" / "trace.csv"));
  EXPECT_EQ(read(path("a") / "seed_4" / "summary.csv"), read(path("b") / "seed_4" / "summary.csv"));
}

TEST_F(CliTest, BenchPlMalformedSpecNamesField) {
  const auto cfg = write_json("p.json", json{{"plbench", {{"lambda_syn", 0.0}}}});
  EXPECT_EQ(run("bench-pl --config " + cfg.string()), 1);
  EXPECT_NE(err_.find("plbench.lambda_syn"), std::string::npos) << err_;
  const auto cfg2 = write_json("q.json", json{{"plbench", {{"centres", json::array()}}}});
  EXPECT_EQ(run("bench-pl --config " + cfg2.string()), 1);
  EXPECT_NE(err_.find("config.plbench.centres"), std::string::npos) << err_;
}

TEST_F(CliTest, GradCheckScopes) {
  ASSERT_EQ(run("grad-check net"), 0) << err_;
  EXPECT_NE(out_.find("net,"), std::string::npos);
  EXPECT_NE(out_.find(",pass"), std::string::npos);
  ASSERT_EQ(run("grad-check gak --trials 10"), 0) << err_;
  ASSERT_EQ(run("grad-check"), 0) << out_;
  EXPECT_EQ(csv_rows(out_).size(), 5u);
  EXPECT_EQ(run("grad-check bogus"), 1);
}

TEST_F(CliTest, UsageAndConfigErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("train"), 1);
  EXPECT_EQ(run("train --config " + write("bad.json", "{\"seeds\": [1").string()), 3);
  EXPECT_EQ(run("train --config " + write_json("u.json", json{{"rots", {{"lamda", 1}}}}).string()), 1);
  EXPECT_NE(err_.find("config.rots.lamda"), std::string::npos);
  EXPECT_EQ(run("train --config " + path("absent.json").string()), 3);
  EXPECT_EQ(run("train --config " + write_json("e.json", json::object()).string()), 1);
  EXPECT_EQ(run("--version"), 0);
}

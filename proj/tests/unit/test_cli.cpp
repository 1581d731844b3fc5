#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          (std::string("fpcagg_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path at(const std::string& name) const { return dir / name; }

  Outcome run(const std::string& args) const {
    const std::string cmd = std::string("cd '") + dir.string() + "' && '" + FPCAGG_CLI + "' " + args +
                            " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read("stdout.txt"), read("stderr.txt")};
  }

  std::string read(const std::string& name) const {
    std::ifstream in(at(name), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(at(name), std::ios::binary) << text;
  }
};

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string field(const std::string& line, std::size_t k) {
  std::istringstream in(line);
  std::string f;
  for (std::size_t i = 0; i <= k; ++i) std::getline(in, f, ',');
  return f;
}

}  // namespace

TEST_F(Cli, GenerateWritesAScenarioDataset) {
  ASSERT_EQ(run("generate --scenario 1 --seed 9 --out data.csv").code, 0);
  const auto rows = lines(read("data.csv"));
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], "id,time,value,label");
  std::set<std::string> ids;
  for (std::size_t i = 1; i < rows.size(); ++i) ids.insert(field(rows[i], 0));
  EXPECT_EQ(ids.size(), 200u);
  EXPECT_EQ(*ids.begin(), "c0001");
  EXPECT_EQ(*ids.rbegin(), "c0200");

  // stdout output and a repeated run give the same bytes
  const auto to_stdout = run("generate --scenario 1 --seed 9 --out -");
  EXPECT_EQ(to_stdout.code, 0);
  EXPECT_EQ(to_stdout.out, read("data.csv"));
  EXPECT_NE(run("generate --scenario 1 --seed 10 --out -").out, to_stdout.out);
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("generate --scenario 1 --no-such-flag").code, 2);
  EXPECT_EQ(run("generate").code, 2);  // --scenario is required
  EXPECT_EQ(run("").code, 2);          // a subcommand is required
  EXPECT_EQ(run("simulate --scenario 1 --reps many").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, RuntimeErrorsExitWithOneAndExplain) {
  const auto bad = run("generate --scenario 10");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("scenario"), std::string::npos);
  EXPECT_EQ(run("generate --scenario 1 --n 201").code, 1);
  EXPECT_EQ(run("predict --data missing.csv --train missing.csv").code, 1);
  write("tiny.csv", "id,time,value,label\na,0.5,1.0,0\n");
  EXPECT_EQ(run("predict --data tiny.csv").code, 1);  // neither --model nor --train
}

TEST_F(Cli, SimulateWritesTheResultTables) {
  const auto r = run("simulate --scenario 4 --reps 3 --B 2 --classifiers lda,naivebayes --out res --quiet");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = lines(read("res/summary.csv"));
  ASSERT_EQ(summary.size(), 9u);
  EXPECT_EQ(summary[0], "classifier,rule,mean_error_pct,se_pct,n_reps");
  for (std::size_t i = 1; i < summary.size(); ++i) EXPECT_EQ(field(summary[i], 4), "3");
  EXPECT_EQ(lines(read("res/errors_long.csv")).size(), 1u + 3 * 8);
  EXPECT_EQ(lines(read("res/trace.csv")).size(), 1u + 3 * 8);
  EXPECT_TRUE(fs::exists(at("res/k_summary.csv")));
  EXPECT_FALSE(fs::exists(at("res/failures.csv")));
}

TEST_F(Cli, ConfigFileSectionsAndOverrides) {
  write("run.ini", "[simulate]\nreps=2\nB=2\nclassifiers=lda\n[predict]\nB=7\n");
  ASSERT_EQ(run("--config run.ini simulate --scenario 4 --out a --quiet").code, 0);
  auto summary = lines(read("a/summary.csv"));
  ASSERT_EQ(summary.size(), 5u);
  EXPECT_EQ(field(summary[1], 0), "lda");
  EXPECT_EQ(field(summary[1], 4), "2");

  // a command-line flag wins over the file
  ASSERT_EQ(run("--config run.ini simulate --scenario 4 --reps 3 --out b --quiet").code, 0);
  EXPECT_EQ(field(lines(read("b/summary.csv"))[1], 4), "3");

  write("typo.ini", "[simulate]\nrepz=2\n");
  EXPECT_EQ(run("--config typo.ini simulate --scenario 4 --out c --quiet").code, 2);
}

TEST_F(Cli, PredictWithTrainingAndWithASavedModelAgree) {
  ASSERT_EQ(run("generate --scenario 4 --seed 1 --n 120 --out train.csv").code, 0);
  ASSERT_EQ(run("generate --scenario 4 --seed 2 --n 40 --out test.csv").code, 0);
  for (const std::string model : {"m.json", "m.cbor"}) {
    SCOPED_TRACE(model);
    const auto fresh = run("predict --train train.csv --classifier lda --B 5 --seed 3 --save-model " + model +
                           " --data test.csv --out fresh.csv");
    ASSERT_EQ(fresh.code, 0) << fresh.err;
    ASSERT_EQ(run("predict --model " + model + " --data test.csv --out loaded.csv").code, 0);
    EXPECT_EQ(read("fresh.csv"), read("loaded.csv"));
  }
  const auto rows = lines(read("loaded.csv"));
  ASSERT_EQ(rows.size(), 41u);
  EXPECT_EQ(rows[0], "id,mean_probability,majority_vote,oob_weight,bayesian_probability,bayesian");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double p = std::stod(field(rows[i], 1)), pi = std::stod(field(rows[i], 4));
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_EQ(field(rows[i], 5), pi > 0.5 ? "1" : "0");
  }
  EXPECT_EQ(run("predict --model train.csv --data test.csv").code, 1);  // not a model file
}

TEST_F(Cli, RealDataAndFpcaSubcommands) {
  ASSERT_EQ(run("generate --scenario 5 --seed 4 --n 90 --out curves.csv").code, 0);
  const auto r =
      run("realdata --data curves.csv --sparsify 3,5 --reps 2 --B 2 --classifiers qda --out real --quiet");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(read("real/summary.csv")).size(), 5u);

  const auto f = run("fpca --data curves.csv --out - --scores scores.csv");
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_FALSE(f.out.empty());
  EXPECT_EQ(lines(read("scores.csv")).size(), 91u);
  EXPECT_EQ(run("fpca --out -").code, 1);  // no input
}

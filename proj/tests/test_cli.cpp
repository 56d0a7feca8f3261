#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "subtrack_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(SUBTRACK_CLI_PATH) + " " + args + " > " + (kRoot / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    ASSERT_EQ(run("synth --n-units 20 --seed 3 --name SYN --out " + data()), 0) << slurp(kRoot / "log.txt");
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
  static std::string data() { return (kRoot / "data").string(); }
  static std::string dir(const std::string& name) { return (kRoot / name).string(); }
};

}  // namespace

TEST_F(Cli, SynthWritesDatasetFiles) {
  for (const char* f : {"train_SYN.txt", "test_SYN.txt", "RUL_SYN.txt", "truth_SYN.csv"}) {
    EXPECT_TRUE(fs::exists(kRoot / "data" / f)) << f;
  }
}

TEST_F(Cli, TrainThenInferMatchesBenchmark) {
  const std::string ds = "--dataset SYN --data-dir " + data();
  ASSERT_EQ(run("train " + ds + " --out " + dir("model")), 0) << slurp(kRoot / "log.txt");
  for (const char* f : {"model.json", "normalizer.json", "scaler.json", "train_hi.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(kRoot / "model" / f)) << f;
  }
  ASSERT_EQ(run("infer " + ds + " --model-dir " + dir("model") + " --out " + dir("inferred")), 0)
      << slurp(kRoot / "log.txt");
  ASSERT_EQ(run("benchmark " + ds + " --out " + dir("bench")), 0) << slurp(kRoot / "log.txt");
  EXPECT_EQ(slurp(kRoot / "inferred" / "rul.csv"), slurp(kRoot / "bench" / "rul.csv"));
  EXPECT_EQ(slurp(kRoot / "inferred" / "test_hi.csv"), slurp(kRoot / "bench" / "test_hi.csv"));
  const auto text = slurp(kRoot / "bench" / "report.txt");
  EXPECT_NE(text.find("RMSE"), std::string::npos);
}

TEST_F(Cli, SstLrBenchmarkRuns) {
  EXPECT_EQ(run("benchmark --dataset SYN --data-dir " + data() + " --mode sst-lr --out " + dir("lr")), 0)
      << slurp(kRoot / "log.txt");
  EXPECT_TRUE(fs::exists(kRoot / "lr" / "report.json"));
}

TEST_F(Cli, MissingInputLeavesNoOutput) {
  const int code = run("benchmark --dataset NOPE --data-dir " + data() + " --out " + dir("missing"));
  EXPECT_NE(code, 0);
  EXPECT_FALSE(fs::exists(kRoot / "missing"));
  EXPECT_NE(slurp(kRoot / "log.txt").find("NOPE"), std::string::npos);
}

TEST_F(Cli, ExitCodesByErrorKind) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("benchmark --no-such-flag"), 1);
  // Invalid configuration value.
  EXPECT_EQ(run("benchmark --dataset SYN --data-dir " + data() + " --alpha 1.5 --out " + dir("bad_alpha")), 1);
  EXPECT_FALSE(fs::exists(kRoot / "bad_alpha"));
  // Malformed data file.
  fs::create_directories(kRoot / "broken");
  fs::copy_file(kRoot / "data" / "test_SYN.txt", kRoot / "broken" / "test_BAD.txt");
  fs::copy_file(kRoot / "data" / "RUL_SYN.txt", kRoot / "broken" / "RUL_BAD.txt");
  std::ofstream(kRoot / "broken" / "train_BAD.txt") << "1 1 0.5 0.5\n";
  EXPECT_EQ(run("benchmark --dataset BAD --data-dir " + dir("broken") + " --out " + dir("bad_out")), 2);
  EXPECT_FALSE(fs::exists(kRoot / "bad_out"));
  // A corrupted model directory is rejected by the loader.
  ASSERT_EQ(run("train --dataset SYN --data-dir " + data() + " --out " + dir("model2")), 0);
  std::ofstream(kRoot / "model2" / "model.json") << "{\"version\": 1, \"kind\": \"subspace\"";
  EXPECT_NE(run("infer --dataset SYN --data-dir " + data() + " --model-dir " + dir("model2") + " --out " +
                dir("inf2")),
            0);
  EXPECT_FALSE(fs::exists(kRoot / "inf2"));
}

TEST_F(Cli, ConfigFileValuesWithFlagOverride) {
  std::ofstream(kRoot / "run.toml") << "[benchmark]\ndataset = \"SYN\"\ndata-dir = \"" << data()
                                    << "\"\nmode = \"sst-lr\"\ntau2 = 30\n";
  ASSERT_EQ(run("benchmark --config " + (kRoot / "run.toml").string() + " --tau2 35 --out " + dir("cfg")), 0)
      << slurp(kRoot / "log.txt");
  const auto report = slurp(kRoot / "cfg" / "report.json");
  EXPECT_NE(report.find("\"sst-lr\""), std::string::npos);
  EXPECT_NE(report.find("\"tau2\": 35"), std::string::npos);
  std::ofstream(kRoot / "bad.toml") << "bogus = 3\n";
  EXPECT_EQ(run("benchmark --config " + (kRoot / "bad.toml").string()), 1);
}

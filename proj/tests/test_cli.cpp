#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "crrt/cli/config.hpp"
#include "crrt/data/dataset_io.hpp"

namespace fs = std::filesystem;
using namespace crrt;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() / ("crrt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "small.ini") << "[data]\nwindow = 6\nsplit_train = 0.8\nsplit_validation = 0.1\nsplit_test = 0.1\n\n"
                                        "[policy]\nembed_dim = 8\nblocks = 1\nheads = 2\n\n[critic]\nhidden = 8\n\n"
                                        "[pretrain]\nepochs = 2\nbatch = 64\nlr = 0.003\n\n"
                                        "[crr]\niterations = 12\ncadence = 6\nbatch = 16\n\n[run]\nseed = 7\n";
  }
  void TearDown() override { fs::remove_all(dir); }

  /// Runs the CLI inside `dir`; returns the exit status, stderr goes to err.txt.
  int run(const std::string& args, const std::string& env = {}) {
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" CRRT_CLI_PATH "' " + args + " > out.txt 2> err.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string err() const { return slurp(dir / "err.txt"); }
  std::string out() const { return slurp(dir / "out.txt"); }

  void synth_and_ingest() {
    ASSERT_EQ(run("synth --kind sessions --items 30 --actors 60 --length 10 --seed 3 --out syn"), 0) << err();
    ASSERT_EQ(run("ingest --config small.ini --in syn/log.csv --out ds"), 0) << err();
  }
};

}  // namespace

// Hand trace, window 3, threshold 3.5. Rows 2 and 6 repeat an (actor,
// timestamp) pair and are dropped. Time order a@10(u1), a@10(u2), c@11, d@12
// gives catalog a=1, c=2, d=3 and per actor one positive then one terminal
// zero-reward step: 4 transitions.
TEST_F(Cli, IngestSixRowFixtureGivesFourTransitions) {
  std::ofstream(dir / "six.csv") << "userId,itemId,rating,timestamp\n1,a,4.0,10\n1,b,5.0,10\n1,c,2.0,11\n"
                                    "2,a,4.5,10\n2,d,3.0,12\n2,e,4.0,12\n";
  ASSERT_EQ(run("ingest --in six.csv --out ds --set data.window=3"), 0) << err();
  auto ds = data::read_dataset(dir / "ds");
  ASSERT_EQ(ds.train.size() + ds.validation.size() + ds.test.size(), 4u);
  ASSERT_EQ(ds.train.size(), 4u);
  EXPECT_EQ(ds.num_items(), 3u);
  const StateSequence empty(std::vector<int>{0, 0, 0}), after_a(std::vector<int>{0, 0, 1});
  const auto& t = ds.train;
  EXPECT_EQ(t[0].state, empty);
  EXPECT_EQ(t[0].action, 1);
  EXPECT_EQ(t[0].reward, 1.0);
  EXPECT_EQ(t[0].next, after_a);
  EXPECT_EQ(t[1].state, after_a);
  EXPECT_EQ(t[1].action, 2);
  EXPECT_EQ(t[1].reward, 0.0);
  EXPECT_EQ(t[1].next, after_a);
  EXPECT_TRUE(t[1].terminal);
  EXPECT_EQ(t[3].action, 3);
  EXPECT_TRUE(t[3].terminal);
}

TEST_F(Cli, EvaluateIsByteIdenticalAcrossRuns) {
  synth_and_ingest();
  ASSERT_EQ(run("pretrain --config small.ini --data ds --out pre --threads 1"), 0) << err();
  for (const char* out : {"e1", "e2"})
    ASSERT_EQ(run(std::string("evaluate --config small.ini --checkpoint pre/policy.ckpt --data ds --pool both --seed 5 --out ") + out), 0)
        << err();
  EXPECT_EQ(slurp(dir / "e1/report.json"), slurp(dir / "e2/report.json"));
  EXPECT_EQ(slurp(dir / "e1/samples.csv"), slurp(dir / "e2/samples.csv"));
  auto report = nlohmann::json::parse(slurp(dir / "e1/report.json"));
  EXPECT_TRUE(report["hr10"].is_number());
  EXPECT_TRUE(report["hr10_rand"].is_number());
  EXPECT_GE(report["hr10_rand"].get<double>(), report["hr10"].get<double>());
}

TEST_F(Cli, ZeroIterationsReproducesInitCheckpoint) {
  synth_and_ingest();
  ASSERT_EQ(run("pretrain --config small.ini --data ds --out pre"), 0) << err();
  ASSERT_EQ(run("train-crr --config small.ini --data ds --init pre/policy.ckpt --set crr.iterations=0 --out k0"), 0) << err();
  EXPECT_EQ(slurp(dir / "pre/policy.ckpt"), slurp(dir / "k0/policy.ckpt"));
}

TEST_F(Cli, TrainingRerunsAreByteIdenticalAndResumeIsANoOpAtTheEnd) {
  synth_and_ingest();
  ASSERT_EQ(run("pretrain --config small.ini --data ds --out p1 --threads 1"), 0) << err();
  ASSERT_EQ(run("pretrain --config small.ini --data ds --out p2 --threads 1"), 0) << err();
  EXPECT_EQ(slurp(dir / "p1/policy.ckpt"), slurp(dir / "p2/policy.ckpt"));
  EXPECT_EQ(slurp(dir / "p1/pretrain_curve.csv"), slurp(dir / "p2/pretrain_curve.csv"));
  ASSERT_EQ(run("train-crr --config small.ini --data ds --init p1/policy.ckpt --out c1 --threads 1"), 0) << err();
  ASSERT_EQ(run("train-crr --config small.ini --data ds --init p1/policy.ckpt --out c2 --threads 1"), 0) << err();
  for (const char* f : {"policy.ckpt", "critic.ckpt", "state.ckpt", "crr_curve.csv"}) EXPECT_EQ(slurp(dir / "c1" / f), slurp(dir / "c2" / f)) << f;
  ASSERT_EQ(run("train-crr --config small.ini --data ds --resume c1/state.ckpt --out c3"), 0) << err();
  EXPECT_EQ(slurp(dir / "c1/policy.ckpt"), slurp(dir / "c3/policy.ckpt"));
  ASSERT_EQ(run("train-crr --config small.ini --data ds --no-init --out c4"), 0) << err();
  EXPECT_NE(slurp(dir / "c1/policy.ckpt"), slurp(dir / "c4/policy.ckpt"));
}

TEST_F(Cli, ManifestRecordsResolvedConfigAndGitBlobHashes) {
  synth_and_ingest();
  auto m = nlohmann::json::parse(slurp(dir / "ds/run_manifest.json"));
  EXPECT_EQ(m["command"], "ingest");
  EXPECT_EQ(m["seed"], 7);
  // every field is present, defaults included
  cli::RunConfig c;
  for (const auto& f : cli::fields(c)) {
    const auto dot = f.path.find('.');
    EXPECT_TRUE(m["config"][f.path.substr(0, dot)].contains(f.path.substr(dot + 1))) << f.path;
  }
  EXPECT_EQ(m["config"]["crr"]["tau"], 0.01);
  EXPECT_EQ(m["config"]["data"]["window"], 6);
  // independent oracle: git's own object id
  ASSERT_EQ(std::system(("cd '" + dir.string() + "' && git hash-object syn/log.csv > h.txt").c_str()), 0);
  std::string expected = slurp(dir / "h.txt");
  expected.erase(expected.find_last_not_of("\n") + 1);
  EXPECT_EQ(m["inputs"]["log"]["sha1"], expected);
  EXPECT_EQ(cli::git_blob_hash(dir / "syn/log.csv"), expected);
}

TEST_F(Cli, ExitCodesAndFieldPathErrors) {
  EXPECT_EQ(run("verify --suite tabular"), 0) << err();
  EXPECT_EQ(run("verify --suite nope"), 2);
  EXPECT_EQ(run("synth --kind sessions --items 20 --actors 10 --length 5 --out syn"), 0) << err();

  EXPECT_EQ(run("ingest --in syn/log.csv --out ds --set crr.gama=0.5"), 2);
  EXPECT_NE(err().find("crr.gama"), std::string::npos) << err();
  EXPECT_EQ(run("ingest --in syn/log.csv --out ds --set crr.gamma=1.5"), 2);
  EXPECT_NE(err().find("crr.gamma"), std::string::npos) << err();
  EXPECT_EQ(run("ingest --in syn/log.csv --out ds --set pretrain.batch=abc"), 2);
  EXPECT_NE(err().find("pretrain.batch"), std::string::npos) << err();
  std::ofstream(dir / "bad.ini") << "[policy]\nheads = 3\n";
  EXPECT_EQ(run("ingest --config bad.ini --in syn/log.csv --out ds"), 2);
  EXPECT_NE(err().find("policy.heads"), std::string::npos) << err();
  EXPECT_FALSE(fs::exists(dir / "ds"));  // nothing computed on a config error

  EXPECT_EQ(run("ingest --in missing.csv --out ds"), 2);
  EXPECT_EQ(run("train-crr --data ds --out x"), 2);  // data path missing
  std::ofstream(dir / "broken.csv") << "userId,itemId,rating,timestamp\n1,a,zz,3\n";
  EXPECT_EQ(run("ingest --in broken.csv --out ds"), 3);
  EXPECT_NE(err().find("broken.csv:2"), std::string::npos) << err();
  EXPECT_EQ(run("bogus"), 2);
}

TEST_F(Cli, OutputRootEnvironmentVariable) {
  fs::create_directories(dir / "root");
  ASSERT_EQ(run("synth --kind tabular --states 3 --actions 2 --episodes 4 --horizon 5 --out t", "CRRT_OUTPUT_ROOT=root"), 0) << err();
  EXPECT_TRUE(fs::exists(dir / "root/t/mdp.json"));
  auto ds = data::read_dataset(dir / "root/t/data");
  EXPECT_EQ(ds.train.size(), 20u);
  EXPECT_EQ(ds.window, 1u);
}

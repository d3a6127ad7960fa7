#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "megloc/binary_io.hpp"
#include "megloc/evaluation.hpp"
#include "megloc/network.hpp"
#include "megloc/signal_gen.hpp"

namespace megloc {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("megloc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunResult run(std::vector<std::string> args) {
    args.insert(args.end(), {"--out", dir_.string(), "--set", "geometry.sensors=24", "--set",
                             "geometry.sources=120"});
    std::ostringstream out, err;
    RunResult r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
  }

  std::vector<std::uint8_t> bytes(const std::string& name) const { return io::read_file(dir_ / name); }

  fs::path write_config(const std::string& text) const {
    const auto path = dir_ / "run.json";
    std::ofstream(path) << text;
    return path;
  }

  fs::path dir_;
};

std::vector<nlohmann::json> json_lines(const std::string& text) {
  std::vector<nlohmann::json> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(nlohmann::json::parse(line));
  return lines;
}

TEST_F(CliTest, GenGeometryIsReproducible) {
  const auto first = run({"gen-geometry"});
  ASSERT_EQ(first.code, 0) << first.err;
  const auto lines = json_lines(first.out);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0]["command"], "gen-geometry");
  EXPECT_EQ(lines[1]["M"], 24);
  EXPECT_EQ(lines[1]["P"], 120);
  const auto a = bytes("geometry.megl");
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  EXPECT_EQ(bytes("geometry.megl"), a);
}

TEST_F(CliTest, DefaultSensorCount) {
  std::ostringstream out, err;
  ASSERT_EQ(cli::run({"show-config"}, out, err), 0);
  const auto config = json_lines(out.str()).at(0)["config"];
  EXPECT_EQ(config["geometry"]["sensors"], 306);
}

TEST_F(CliTest, ConfigErrorsExitTwoWithoutWriting) {
  const auto unknown = run({"gen-geometry", "--set", "geometry.radius=1"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("geometry.radius"), std::string::npos);

  const auto cfg = write_config(R"({"geometry": {"sensors": 24, "colour": "red"}})");
  const auto nested = run({"gen-geometry", "--config", cfg.string()});
  EXPECT_EQ(nested.code, 2);
  EXPECT_NE(nested.err.find("geometry.colour"), std::string::npos);

  const auto broken = write_config(R"({"geometry": {"sensors": 24,)");
  EXPECT_EQ(run({"gen-geometry", "--config", broken.string()}).code, 2);

  EXPECT_EQ(run({"gen-geometry", "--set", "geometry.source_radius=\"far\""}).code, 2);
  EXPECT_EQ(run({"gen-geometry", "--set", "geometry.source_radius=0.2"}).code, 2);
  EXPECT_EQ(run({"no-such-verb"}).code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "geometry.megl"));
}

TEST_F(CliTest, LocalizeNoiselessSingleSource) {
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  ASSERT_EQ(run({"gen-data", "--set", "data.snr_db=\"noiseless\"", "--set", "data.count=4"}).code, 0);
  for (const char* method : {"rap_music", "music"}) {
    const auto r = run({"localize", "--set", "localize.example=3", "--set",
                        std::string("localize.method=\"") + method + "\""});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto lines = json_lines(r.out);
    ASSERT_EQ(lines.size(), 3u);
    const auto& found = lines[1]["position"];
    const auto& truth = lines[2]["truth"][0];
    // Dataset targets are stored as f32.
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(found[c].get<double>(), truth[c].get<double>(), 1e-7);
    EXPECT_LT(lines[2]["assignment_error_m"].get<double>(), 1e-7);
  }
}

TEST_F(CliTest, TrainZeroStepsWritesInitialization) {
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  const auto r = run({"train", "--set", "data.n_samples=1", "--set", "model.hidden=[6,5]", "--set",
                      "model.seed=3", "--set", "model.standardize_outputs=false"});
  ASSERT_EQ(r.code, 0) << r.err;
  ArchitectureSpec arch;
  arch.input_rows = 24;
  arch.hidden = {6, 5};
  arch.outputs = 3;
  auto expected = build_network(arch, 3);
  const auto geometry = load_geometry(dir_ / "geometry.megl");
  expected.lead_field_fingerprint = geometry.lead_field.fingerprint();
  EXPECT_EQ(bytes("model.megm"), encode_model(expected));
  EXPECT_EQ(bytes("loss_history.csv").size(), std::string("step,loss,reg_term\n").size());
}

TEST_F(CliTest, TrainFromDatasetFileAndLocalizeWithModel) {
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  const std::vector<std::string> data{"--set", "data.n_samples=1", "--set", "data.count=64"};
  auto args = std::vector<std::string>{"gen-data"};
  args.insert(args.end(), data.begin(), data.end());
  ASSERT_EQ(run(args).code, 0);
  args = {"train", "--set", "train.source=\"file\"", "--set", "train.steps=20", "--set",
          "train.learning_rate=50", "--set", "train.log_every=5", "--set", "model.hidden=[16]"};
  args.insert(args.end(), data.begin(), data.end());
  const auto trained = run(args);
  ASSERT_EQ(trained.code, 0) << trained.err;
  const auto history = bytes("loss_history.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 5);

  const auto r = run({"localize", "--set", "localize.method=\"model\""});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json_lines(r.out)[1]["method"], "model");
}

TEST_F(CliTest, FingerprintMismatchExitsThree) {
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  ASSERT_EQ(run({"gen-data", "--set", "data.count=2"}).code, 0);
  const auto old_fp = load_geometry(dir_ / "geometry.megl").lead_field.fingerprint();
  ASSERT_EQ(run({"gen-geometry", "--set", "geometry.seed=2"}).code, 0);
  const auto new_fp = load_geometry(dir_ / "geometry.megl").lead_field.fingerprint();
  const auto r = run({"localize"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find(io::hex64(old_fp)), std::string::npos) << r.err;
  EXPECT_NE(r.err.find(io::hex64(new_fp)), std::string::npos) << r.err;
}

TEST_F(CliTest, DivergentTrainingExitsFour) {
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  const auto r = run({"train", "--set", "data.n_samples=1", "--set", "model.hidden=[4]", "--set",
                      "train.steps=50", "--set", "train.learning_rate=1e30"});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("train step"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "model.megm"));
}

TEST_F(CliTest, SweepIsByteIdenticalAcrossRunsAndThreads) {
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  const std::vector<std::string> sweep{"sweep", "--set", "sweep.trials=15", "--set",
                                       "sweep.snr_values=[0, 10, \"noiseless\"]", "--set",
                                       "sweep.correlation_values=[0.3, \"random\"]", "--set",
                                       "sweep.sources=2"};
  ASSERT_EQ(run(sweep).code, 0);
  const auto first = bytes("sweep.csv");
  ASSERT_EQ(run(sweep).code, 0);
  EXPECT_EQ(bytes("sweep.csv"), first);
  auto threaded = sweep;
  threaded.insert(threaded.end(), {"--threads", "3"});
  ASSERT_EQ(run(threaded).code, 0);
  EXPECT_EQ(bytes("sweep.csv"), first);
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 7);
}

TEST_F(CliTest, PerturbSweepAddsRhoColumn) {
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  const auto r = run({"perturb-sweep", "--set", "sweep.trials=5", "--set", "sweep.snr_values=[10]",
                      "--set", "sweep.perturbation_rhos=[0, 0.05]"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_report_csv(dir_ / "sweep.csv");
  EXPECT_TRUE(report.robustness);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[1].perturbation_rho, 0.05);
}

TEST_F(CliTest, BenchTime) {
  ASSERT_EQ(run({"gen-geometry"}).code, 0);
  const auto r = run({"bench-time", "--set", "bench.algorithms=[\"rap_music\", \"music\"]", "--set",
                      "bench.sources=[1, 2]", "--set", "bench.n_samples=[16]"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_timing_csv(dir_ / "timing.csv");
  EXPECT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(run({"bench-time", "--set", "bench.repeats=3"}).code, 2);
}

}  // namespace
}  // namespace megloc

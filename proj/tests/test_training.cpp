#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "megloc/errors.hpp"
#include "megloc/training.hpp"
#include "test_support.hpp"

namespace megloc {
namespace {

using testing::make_geometry;

// Single-source, single-snapshot, noiseless task on a 100-point grid.
struct SmallTask {
  testing::SmallGeometry geometry = make_geometry(32, 100, 2);
  DatasetSpec spec{.sources = 1, .snr_db = kNoiseless, .correlation = CorrelationTarget::random(),
                   .n_samples = 1, .amplitude = 1.0, .seed = 0};

  NetworkModel model(std::uint64_t seed) const {
    ArchitectureSpec arch;
    arch.input_rows = 32;
    arch.hidden = {64, 32};
    arch.outputs = 3;
    auto m = build_network(arch, seed);
    standardize_outputs(m, geometry.space.positions());
    return m;
  }

  double eval_loss(const NetworkModel& m, const LabeledDataset& ds) const {
    Eigen::MatrixXd x(32, static_cast<Eigen::Index>(ds.size()));
    Eigen::MatrixXd t(3, static_cast<Eigen::Index>(ds.size()));
    for (std::size_t k = 0; k < ds.size(); ++k) {
      x.col(static_cast<Eigen::Index>(k)) = flatten_input(ds.inputs[k]);
      t.col(static_cast<Eigen::Index>(k)) = flatten_target(ds.targets[k]);
    }
    Gradients g;
    return loss_and_gradients(m, x, t, Regularization::none, 0.0, g).loss;
  }
};

constexpr double kSmallTaskRate = 100.0;

TEST(Train, ZeroStepsLeavesModelUnchanged) {
  SmallTask task;
  const auto model = task.model(1);
  DatasetStream stream(task.geometry.lead_field, task.geometry.space, task.spec, 1000);
  StreamSource source(stream);
  TrainingConfig config;
  const auto result = train(model, source, config);
  EXPECT_TRUE(result.history.empty());
  EXPECT_EQ(flatten_parameters(result.model), flatten_parameters(model));
  config.learning_rate = 0.0;
  EXPECT_THROW(train(model, source, config), InvalidArgument);
}

TEST(Train, DeterministicPerSeed) {
  SmallTask task;
  const auto ds = generate_dataset(task.geometry.lead_field, task.geometry.space, task.spec, 50);
  TrainingConfig config{.learning_rate = kSmallTaskRate, .batch_size = 8, .steps = 120,
                        .reg_type = Regularization::tikhonov, .reg_weight = 1e-4, .seed = 3,
                        .log_every = 10};
  DatasetSource a(ds, config.seed);
  DatasetSource b(ds, config.seed);
  const auto ra = train(task.model(1), a, config);
  const auto rb = train(task.model(1), b, config);
  EXPECT_EQ(flatten_parameters(ra.model), flatten_parameters(rb.model));
  ASSERT_EQ(ra.history.size(), 12u);
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    EXPECT_EQ(ra.history[i].step, 10 * i);
    EXPECT_EQ(ra.history[i].loss, rb.history[i].loss);
    EXPECT_GT(ra.history[i].reg_term, 0.0);
  }
  DatasetSource c(ds, 4);
  EXPECT_NE(flatten_parameters(train(task.model(1), c, config).model), flatten_parameters(ra.model));
}

TEST(Train, LearnsSmallNoiselessTask) {
  SmallTask task;
  auto held_spec = task.spec;
  held_spec.seed = 999;
  const auto held = generate_dataset(task.geometry.lead_field, task.geometry.space, held_spec, 300);
  const auto model = task.model(1);
  DatasetStream stream(task.geometry.lead_field, task.geometry.space, task.spec, 1'000'000);
  StreamSource source(stream);
  TrainingConfig config{.learning_rate = kSmallTaskRate, .batch_size = 32, .steps = 2000};
  const auto result = train(model, source, config);
  ASSERT_EQ(result.history.size(), 20u);
  const double before = task.eval_loss(model, held);
  const double after = task.eval_loss(result.model, held);
  EXPECT_LT(after, 0.2 * before) << "before " << before << " after " << after;
  EXPECT_LT(result.history.back().loss, 0.2 * result.history.front().loss);
}

TEST(Train, SmoothedLossDecreasesAcrossSeeds) {
  SmallTask task;
  int decreasing = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    auto spec = task.spec;
    spec.seed = 100 + static_cast<std::uint64_t>(s);
    DatasetStream stream(task.geometry.lead_field, task.geometry.space, spec, 1'000'000);
    StreamSource source(stream);
    TrainingConfig config{.learning_rate = kSmallTaskRate, .batch_size = 32, .steps = 1000,
                          .log_every = 1};
    const auto history = train(task.model(static_cast<std::uint64_t>(s)), source, config).history;
    // Window-10 moving average; the first and last windows and the
    // least-squares slope of the smoothed curve must all indicate descent.
    std::vector<double> smooth;
    for (std::size_t i = 0; i + 10 <= history.size(); ++i) {
      double sum = 0.0;
      for (std::size_t j = i; j < i + 10; ++j) sum += history[j].loss;
      smooth.push_back(sum / 10.0);
    }
    const double n = static_cast<double>(smooth.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < smooth.size(); ++i) {
      mx += static_cast<double>(i) / n;
      my += smooth[i] / n;
    }
    double sxy = 0.0;
    for (std::size_t i = 0; i < smooth.size(); ++i) sxy += (static_cast<double>(i) - mx) * (smooth[i] - my);
    if (sxy < 0.0 && smooth.back() < smooth.front()) ++decreasing;
  }
  EXPECT_GE(decreasing, 19);
}

TEST(Train, StreamExhaustion) {
  SmallTask task;
  DatasetStream stream(task.geometry.lead_field, task.geometry.space, task.spec, 40);
  StreamSource source(stream);
  TrainingConfig config{.learning_rate = 1.0, .batch_size = 32, .steps = 2};
  EXPECT_THROW(train(task.model(1), source, config), InvalidArgument);
}

TEST(Train, NumericFailureReportsStep) {
  SmallTask task;
  auto model = task.model(1);
  DatasetStream stream(task.geometry.lead_field, task.geometry.space, task.spec, 100'000);
  StreamSource source(stream);
  TrainingConfig config{.learning_rate = 1e30, .batch_size = 4, .steps = 50};
  try {
    train(model, source, config);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("train step"), std::string::npos);
  }
}

TEST(Train, LossHistoryCsv) {
  const auto path = std::filesystem::temp_directory_path() / "megloc_loss_history.csv";
  write_loss_history_csv({{0, 0.5, 0.0}, {100, 0.25, 0.125}}, path);
  std::ifstream in(path);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::filesystem::remove(path);
  EXPECT_EQ(contents, "step,loss,reg_term\n0,0.5,0\n100,0.25,0.125\n");
}

}  // namespace
}  // namespace megloc

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "megloc/errors.hpp"
#include "megloc/evaluation.hpp"
#include "test_support.hpp"

namespace megloc {
namespace {

using testing::make_geometry;

Eigen::MatrixXd rows(std::initializer_list<Vec3> points) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), 3);
  Eigen::Index i = 0;
  for (const auto& p : points) m.row(i++) = p.transpose();
  return m;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(AssignmentError, Examples) {
  const auto a = rows({Vec3(0, 0, 0.01), Vec3(0.02, 0, 0), Vec3(0, 0.03, 0)});
  const auto shuffled = rows({Vec3(0, 0.03, 0), Vec3(0, 0, 0.01), Vec3(0.02, 0, 0)});
  EXPECT_EQ(assignment_error(a, shuffled), 0.0);
  EXPECT_NEAR(assignment_error(rows({Vec3(0, 0, 0)}), rows({Vec3(0.003, 0, 0)})), 0.003, 1e-15);
  // Identity matching: (12 + 8) / 2 = 10 mm; swapped: (2 + 2) / 2 = 2 mm.
  const auto truth = rows({Vec3(0, 0, 0), Vec3(0.010, 0, 0)});
  const auto estimate = rows({Vec3(0.012, 0, 0), Vec3(0.002, 0, 0)});
  EXPECT_NEAR(assignment_error(truth, estimate), 0.002, 1e-15);
}

TEST(AssignmentError, SymmetryAndIdentity) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index q = 1 + static_cast<Eigen::Index>(rng.below(3));
    Eigen::MatrixXd a(q, 3), b(q, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = rng.uniform(-0.1, 0.1);
      b.data()[i] = rng.uniform(-0.1, 0.1);
    }
    ASSERT_EQ(assignment_error(a, a), 0.0);
    ASSERT_NEAR(assignment_error(a, b), assignment_error(b, a), 1e-15);
    ASSERT_GE(assignment_error(a, b), 0.0);
  }
}

TEST(AssignmentError, Errors) {
  EXPECT_THROW(assignment_error(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(1, 3)),
               InvalidArgument);
  EXPECT_THROW(assignment_error(Eigen::MatrixXd::Zero(4, 3), Eigen::MatrixXd::Zero(4, 3)),
               InvalidArgument);
}

TEST(Sweep, NoiselessRapMusicIsExact) {
  const auto g = make_geometry(32, 150);
  ExperimentConfig config;
  config.sources = 1;
  config.snr_values = {kNoiseless};
  config.trials = 30;
  config.seed = 4;
  const auto report = run_accuracy_sweep(config, make_rap_music_localizer(g.lead_field, g.space, 1),
                                         g.lead_field, g.space);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].mean_error_m, 0.0);
  EXPECT_EQ(report.rows[0].trials, 30u);
  EXPECT_EQ(report.rows[0].localizer, "rap_music");
}

TEST(Sweep, DeterministicAndThreadIndependent) {
  const auto g = make_geometry(32, 150);
  ExperimentConfig config;
  config.sources = 2;
  config.snr_values = {0.0, 10.0};
  config.correlation_values = {CorrelationTarget::fixed(0.2), CorrelationTarget::random()};
  config.trials = 20;
  config.seed = 9;
  config.record_elapsed = false;
  const auto rap = make_rap_music_localizer(g.lead_field, g.space, 2);
  const auto a = run_accuracy_sweep(config, rap, g.lead_field, g.space);
  config.threads = 3;
  const auto b = run_accuracy_sweep(config, rap, g.lead_field, g.space);
  EXPECT_EQ(report_csv(a), report_csv(b));
  ASSERT_EQ(a.rows.size(), 4u);
  EXPECT_TRUE(std::isnan(a.rows[0].mean_elapsed_s));
}

TEST(Sweep, PairedSeedsAcrossLocalizers) {
  // A localizer that echoes a fingerprint of its input lets two sweeps
  // compare the data they were shown.
  const auto g = make_geometry(16, 40);
  ExperimentConfig config;
  config.snr_values = {5.0};
  config.trials = 10;
  config.seed = 2;
  config.n_samples = 4;
  std::vector<double> seen_a, seen_b;
  Localizer a{"a", [&](const Eigen::MatrixXd& y) {
                seen_a.push_back(y.sum());
                return Eigen::MatrixXd::Zero(1, 3).eval();
              }};
  Localizer b{"b", [&](const Eigen::MatrixXd& y) {
                seen_b.push_back(y.sum());
                return Eigen::MatrixXd::Ones(1, 3).eval();
              }};
  run_accuracy_sweep(config, a, g.lead_field, g.space);
  run_accuracy_sweep(config, b, g.lead_field, g.space);
  EXPECT_EQ(seen_a, seen_b);
}

TEST(Sweep, RapMusicErrorFallsWithSnr) {
  const auto g = make_geometry(32, 200);
  ExperimentConfig config;
  config.sources = 2;
  config.snr_values = {-10.0, -5.0, 0.0, 5.0, 10.0, 20.0};
  config.trials = 200;
  config.seed = 12;
  const auto report = run_accuracy_sweep(config, make_rap_music_localizer(g.lead_field, g.space, 2),
                                         g.lead_field, g.space);
  int violations = 0;
  for (std::size_t i = 1; i < report.rows.size(); ++i)
    if (report.rows[i].mean_error_m > report.rows[i - 1].mean_error_m) ++violations;
  EXPECT_LE(violations, 1);
  EXPECT_LE(report.rows.back().mean_error_m, report.rows.front().mean_error_m);
}

TEST(Sweep, CentroidBaselineMatchesDirectOracle) {
  const auto g = make_geometry(16, 60);
  ExperimentConfig config;
  config.snr_values = {-10.0, 20.0};
  config.trials = 40;
  config.n_samples = 1;
  config.seed = 6;
  const auto report =
      run_accuracy_sweep(config, make_centroid_localizer(g.space, 1), g.lead_field, g.space);
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : g.space.positions()) centroid += p;
  centroid /= 60.0;
  for (std::size_t i = 0; i < 2; ++i) {
    DatasetSpec spec{.sources = 1, .snr_db = config.snr_values[i],
                     .correlation = CorrelationTarget::fixed(0.0), .n_samples = 1, .amplitude = 1.0,
                     .seed = derive_seed(6, {i, 0})};
    double sum = 0.0;
    for (std::uint64_t t = 0; t < 40; ++t) {
      const auto ex = generate_example(g.lead_field, g.space, spec, t);
      sum += (Vec3(ex.target.row(0).transpose()) - centroid).norm();
    }
    EXPECT_NEAR(report.rows[i].mean_error_m, sum / 40.0, 1e-15);
  }
}

TEST(Sweep, MusicLocalizerPadsMissingSources) {
  const SensorArray sensors = build_sensor_helmet(8, 0.12);
  const SourceSpace space({Vec3(0.0, 0.0, 0.05), Vec3(0.01, 0.0, 0.05), Vec3(0.0, 0.01, 0.05)},
                          {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitX()});
  const auto lf = compute_lead_field(sensors, space);
  auto graph = std::make_shared<const NeighborGraph>(build_neighbor_graph(space));
  const auto music = make_music_localizer(lf, space, graph, 3);
  const Eigen::MatrixXd y = lf.entries().col(0) * Eigen::RowVectorXd::Ones(4);
  const Eigen::MatrixXd out = music.localize(y);
  ASSERT_EQ(out.rows(), 3);
  EXPECT_TRUE(out.allFinite());
}

TEST(Robustness, ZeroRhoMatchesAccuracySweep) {
  const auto g = make_geometry(32, 100);
  ExperimentConfig config;
  config.sources = 1;
  config.snr_values = {5.0};
  config.trials = 25;
  config.seed = 3;
  config.perturbation_rhos = {0.0};
  config.record_elapsed = false;
  const auto rap = make_rap_music_localizer(g.lead_field, g.space, 1);
  const auto acc = run_accuracy_sweep(config, rap, g.lead_field, g.space);
  const auto rob = run_robustness_sweep(config, rap, g.lead_field, g.space);
  ASSERT_EQ(rob.rows.size(), 1u);
  EXPECT_TRUE(rob.robustness);
  EXPECT_EQ(rob.rows[0].mean_error_m, acc.rows[0].mean_error_m);
  EXPECT_EQ(rob.rows[0].stderr_m, acc.rows[0].stderr_m);
  EXPECT_EQ(rob.rows[0].perturbation_rho, 0.0);
}

TEST(Robustness, OneRowPerRhoAndCondition) {
  const auto g = make_geometry(32, 100);
  ExperimentConfig config;
  config.sources = 1;
  config.snr_values = {0.0, 10.0};
  config.trials = 10;
  config.perturbation_rhos = {0.0, 0.05, 0.2};
  const auto rob = run_robustness_sweep(config, make_rap_music_localizer(g.lead_field, g.space, 1),
                                        g.lead_field, g.space);
  ASSERT_EQ(rob.rows.size(), 6u);
  for (const auto& row : rob.rows) EXPECT_TRUE(std::isfinite(row.mean_error_m));
  EXPECT_EQ(rob.rows[5].perturbation_rho, 0.2);
  config.perturbation_rhos = {};
  EXPECT_THROW(run_robustness_sweep(config, make_centroid_localizer(g.space, 1), g.lead_field, g.space),
               InvalidArgument);
  config.perturbation_rhos = {-0.1};
  EXPECT_THROW(run_robustness_sweep(config, make_centroid_localizer(g.space, 1), g.lead_field, g.space),
               InvalidArgument);
}

TEST(Csv, EmptyAndSingleRow) {
  const auto dir = std::filesystem::temp_directory_path();
  SweepReport empty;
  write_report_csv(empty, dir / "megloc_empty.csv");
  EXPECT_EQ(slurp(dir / "megloc_empty.csv"),
            "condition_snr_db,condition_corr,q,n_samples,localizer,trials,mean_error_m,stderr_m,"
            "mean_elapsed_s\n");
  SweepReport one;
  one.rows.push_back({10.0, CorrelationTarget::fixed(0.5), 2, 16, "rap_music", 200, 0.0123456789012345,
                      0.001, 0.25, std::nullopt});
  write_report_csv(one, dir / "megloc_one.csv");
  const auto text = slurp(dir / "megloc_one.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_NE(text.find("10,0.5,2,16,rap_music,200,0.0123456789012,0.001,0.25\n"), std::string::npos);
  std::filesystem::remove(dir / "megloc_empty.csv");
  std::filesystem::remove(dir / "megloc_one.csv");
}

TEST(Csv, RoundTrip) {
  SweepReport report;
  report.robustness = true;
  report.rows.push_back({kNoiseless, CorrelationTarget::random(), 1, 1, "mlp", 10, 0.0031415926535,
                         2.5e-4, std::nan(""), 0.05});
  report.rows.push_back({-7.5, CorrelationTarget::fixed(-0.25), 3, 16, "music", 200, 1.0 / 3.0, 1e-9,
                         1.5e-3, 0.2});
  const auto path = std::filesystem::temp_directory_path() / "megloc_roundtrip.csv";
  write_report_csv(report, path);
  const auto back = read_report_csv(path);
  std::filesystem::remove(path);
  ASSERT_TRUE(back.robustness);
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = report.rows[i];
    const auto& b = back.rows[i];
    EXPECT_EQ(a.snr_db, b.snr_db);
    EXPECT_EQ(a.correlation, b.correlation);
    EXPECT_EQ(a.sources, b.sources);
    EXPECT_EQ(a.localizer, b.localizer);
    EXPECT_NEAR(a.mean_error_m, b.mean_error_m, 1e-12 * std::abs(a.mean_error_m));
    EXPECT_NEAR(a.stderr_m, b.stderr_m, 1e-12 * std::abs(a.stderr_m));
    EXPECT_EQ(std::isnan(a.mean_elapsed_s), std::isnan(b.mean_elapsed_s));
    EXPECT_EQ(a.perturbation_rho, b.perturbation_rho);
  }
}

TEST(Csv, TimingRoundTripAndBadHeader) {
  TimingReport report;
  report.rows.push_back({"rap_music", 2, 16, 452.17, 10});
  const auto path = std::filesystem::temp_directory_path() / "megloc_timing.csv";
  write_timing_csv(report, path);
  EXPECT_EQ(slurp(path), "algorithm,q,n_samples,median_ms,repeats\nrap_music,2,16,452.17,10\n");
  const auto back = read_timing_csv(path);
  ASSERT_EQ(back.rows.size(), 1u);
  EXPECT_EQ(back.rows[0].median_ms, 452.17);
  EXPECT_THROW(read_report_csv(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Timing, MediansAndRepeats) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), InvalidArgument);

  const auto g = make_geometry(32, 300);
  std::vector<TimedAlgorithm> algs{
      {"rap_music", [&](std::size_t q, std::size_t) -> std::optional<Localizer> {
         return make_rap_music_localizer(g.lead_field, g.space, q);
       }},
      {"centroid", [&](std::size_t q, std::size_t n) -> std::optional<Localizer> {
         if (n != 16) return std::nullopt;
         return make_centroid_localizer(g.space, q);
       }}};
  const auto report = run_timing_benchmark(algs, g.lead_field, g.space, {1, 3}, {1, 16}, 10, 1, 4);
  ASSERT_EQ(report.rows.size(), 6u);
  for (const auto& row : report.rows) {
    EXPECT_GT(row.median_ms, 0.0);
    EXPECT_EQ(row.repeats, 10u);
  }
  EXPECT_THROW(run_timing_benchmark(algs, g.lead_field, g.space, {1}, {1}, 9), InvalidArgument);
}

}  // namespace
}  // namespace megloc

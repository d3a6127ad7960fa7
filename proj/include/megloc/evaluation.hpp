#pragma once

// Monte-Carlo accuracy, robustness and timing experiments over interchangeable
// localizers, plus CSV reporting.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "megloc/forward_model.hpp"
#include "megloc/network.hpp"
#include "megloc/signal_gen.hpp"
#include "megloc/subspace.hpp"

namespace megloc {

/// Estimated source positions (one row per found source, meters).
using LocalizeFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& measurements)>;

struct Localizer {
  std::string name;
  LocalizeFn localize;
};

Localizer make_rap_music_localizer(const LeadField& lead_field, const SourceSpace& space,
                                   std::size_t sources);
Localizer make_music_localizer(const LeadField& lead_field, const SourceSpace& space,
                               std::shared_ptr<const NeighborGraph> graph, std::size_t sources);
Localizer make_network_localizer(std::shared_ptr<const NetworkModel> model, std::string name);
/// Baseline that ignores the data and answers the grid centroid for every source.
Localizer make_centroid_localizer(const SourceSpace& space, std::size_t sources);

/// Minimum over row permutations of the mean Euclidean distance between
/// matched rows. Both inputs are Q x 3 with Q <= 3.
double assignment_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate);

struct ExperimentConfig {
  std::size_t sources = 1;
  std::vector<SnrDb> snr_values{10.0};
  std::vector<CorrelationTarget> correlation_values{CorrelationTarget::fixed(0.0)};
  std::size_t n_samples = 16;
  std::size_t trials = 200;
  std::vector<double> perturbation_rhos{0.0};
  std::uint64_t seed = 0;
  double amplitude = 1.0;
  std::size_t threads = 1;
  /// When false the elapsed column is NaN, which keeps reports byte-stable.
  bool record_elapsed = true;
};

struct SweepRow {
  SnrDb snr_db;
  CorrelationTarget correlation = CorrelationTarget::fixed(0.0);
  std::size_t sources = 0;
  std::size_t n_samples = 0;
  std::string localizer;
  std::size_t trials = 0;
  double mean_error_m = 0.0;
  double stderr_m = 0.0;
  double mean_elapsed_s = 0.0;
  std::optional<double> perturbation_rho;
};

struct SweepReport {
  /// Robustness reports carry a trailing perturbation_rho column.
  bool robustness = false;
  std::vector<SweepRow> rows;
};

/// Trial t of condition (i, j) = (snr_values[i], correlation_values[j]) is
/// example t of a dataset seeded with derive_seed(config.seed, {i, j}), so
/// every localizer swept with the same config sees identical data.
SweepReport run_accuracy_sweep(const ExperimentConfig& config, const Localizer& localizer,
                               const LeadField& lead_field, const SourceSpace& space);

/// Data are simulated through perturb_lead_field(A, rho) (a fresh model error
/// per trial) while the localizer keeps its original forward model.
SweepReport run_robustness_sweep(const ExperimentConfig& config, const Localizer& localizer,
                                 const LeadField& lead_field, const SourceSpace& space);

struct TimingRow {
  std::string algorithm;
  std::size_t sources = 0;
  std::size_t n_samples = 0;
  double median_ms = 0.0;
  std::size_t repeats = 0;
};

struct TimingReport {
  std::vector<TimingRow> rows;
};

/// Algorithm factory for one (Q, N) cell; std::nullopt skips the cell.
struct TimedAlgorithm {
  std::string name;
  std::function<std::optional<Localizer>(std::size_t sources, std::size_t n_samples)> make;
};

TimingReport run_timing_benchmark(const std::vector<TimedAlgorithm>& algorithms,
                                  const LeadField& lead_field, const SourceSpace& space,
                                  const std::vector<std::size_t>& source_counts,
                                  const std::vector<std::size_t>& sample_counts,
                                  std::size_t repeats, std::size_t warmup = 2,
                                  std::uint64_t seed = 0);

double median(std::vector<double> values);

std::string report_csv(const SweepReport& report);
void write_report_csv(const SweepReport& report, const std::filesystem::path& path);
SweepReport read_report_csv(const std::filesystem::path& path);
std::string timing_csv(const TimingReport& report);
void write_timing_csv(const TimingReport& report, const std::filesystem::path& path);
TimingReport read_timing_csv(const std::filesystem::path& path);

std::string format_snr(const SnrDb& snr);
SnrDb parse_snr(const std::string& text);
std::string format_correlation(const CorrelationTarget& target);
CorrelationTarget parse_correlation(const std::string& text);

}  // namespace megloc

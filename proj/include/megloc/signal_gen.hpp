#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "megloc/forward_model.hpp"

namespace megloc {

/// Pairwise inter-source correlation target: a fixed value shared by every
/// pair, or "random" (each pair drawn uniformly from [0, 0.95]).
class CorrelationTarget {
 public:
  static CorrelationTarget fixed(double value);
  static CorrelationTarget random() { return CorrelationTarget(); }

  bool is_random() const { return !value_; }
  /// Fixed value; only meaningful when !is_random().
  double value() const { return value_.value_or(0.0); }

  bool operator==(const CorrelationTarget&) const = default;

 private:
  CorrelationTarget() = default;
  std::optional<double> value_;
};

inline constexpr double kRandomCorrelationMax = 0.95;

struct TimecourseSpec {
  std::size_t n_samples = 16;
  std::size_t n_sources = 1;
  CorrelationTarget correlation = CorrelationTarget::fixed(0.0);
  double amplitude = 1.0;
  std::uint64_t seed = 0;
};

/// Q x N source time courses.
///
/// For N >= 2 every row is a zero-mean mixture of three seed-drawn sinusoids,
/// scaled to RMS `amplitude`. The rows are built from an orthonormalized basis
/// mixed through a lower-triangular factor of the target correlation matrix,
/// so the sample Pearson correlation of every pair equals the target exactly
/// (up to rounding). Requires N >= Q + 1.
///
/// For N = 1 (single snapshot) every source takes the value `amplitude`.
Eigen::MatrixXd sinusoid_mixture_timecourses(const TimecourseSpec& spec);

/// Sample Pearson correlation; throws InvalidArgument on zero variance.
double pearson_correlation(std::span<const double> a, std::span<const double> b);

/// Lower-triangular L with L L^T = R for a positive semidefinite R (zero
/// pivots allowed). Throws InvalidArgument when R is not PSD.
Eigen::MatrixXd psd_lower_factor(const Eigen::MatrixXd& correlation);

struct DatasetSpec {
  std::size_t sources = 1;  // Q in {1, 2, 3}
  SnrDb snr_db = kNoiseless;
  CorrelationTarget correlation = CorrelationTarget::random();
  std::size_t n_samples = 16;
  double amplitude = 1.0;
  std::uint64_t seed = 0;
};

struct Example {
  Eigen::MatrixXd input;              // M x N
  Eigen::MatrixXd target;             // Q x 3, rows sorted lexicographically
  std::vector<std::size_t> indices;   // grid indices in target-row order
};

/// Example `k` of the dataset described by `spec`. Depends only on
/// (lead field, space, spec, k); draws Q distinct grid points uniformly.
Example generate_example(const LeadField& lead_field, const SourceSpace& space,
                         const DatasetSpec& spec, std::uint64_t k);

/// Sorts rows of `positions` lexicographically by (x, y, z) and permutes
/// `indices` alongside.
void canonical_order(Eigen::MatrixXd& positions, std::vector<std::size_t>& indices);

struct DatasetMetadata {
  std::size_t sensors = 0;
  std::size_t n_samples = 0;
  std::size_t sources = 0;
  SnrDb snr_db;
  std::uint64_t seed = 0;
  std::uint64_t lead_field_fingerprint = 0;
};

struct LabeledDataset {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> targets;
  DatasetMetadata metadata;

  std::size_t size() const { return inputs.size(); }
};

LabeledDataset generate_dataset(const LeadField& lead_field, const SourceSpace& space,
                                const DatasetSpec& spec, std::size_t count);

/// Pull-based source yielding the same examples as generate_dataset, one at a
/// time, without materializing them.
class DatasetStream {
 public:
  DatasetStream(const LeadField& lead_field, const SourceSpace& space, DatasetSpec spec,
                std::uint64_t count);

  std::optional<Example> next();
  std::vector<Example> next_batch(std::size_t size);
  std::uint64_t position() const { return position_; }
  std::uint64_t count() const { return count_; }
  const DatasetSpec& spec() const { return spec_; }

 private:
  const LeadField* lead_field_;
  const SourceSpace* space_;
  DatasetSpec spec_;
  std::uint64_t count_;
  std::uint64_t position_ = 0;
};

/// MEGD layout, little-endian:
///   "MEGD" | u32 version | u32 M | u32 N | u32 Q | u64 count | f64 snr_db
///   (NaN = noiseless) | u64 seed | u64 lead-field fingerprint |
///   count x ( M*N f32 measurements column-major | Q*3 f32 targets row-major )
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const LabeledDataset& dataset);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);

}  // namespace megloc

#pragma once

// Synthetic MEG geometry, the fixed-orientation dipole lead field, and noisy
// sensor simulation.
//
// Field of a unit current dipole at p with orientation q, read by a sensor at r
// with orientation n, in a homogeneous medium (unit constant):
//
//   a(r, n; p, q) = ((q x (r - p)) . n) / |r - p|^3

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace megloc {

using Vec3 = Eigen::Vector3d;

/// Requested SNR in dB; std::nullopt means a noiseless recording.
using SnrDb = std::optional<double>;
inline constexpr std::nullopt_t kNoiseless = std::nullopt;

class SensorArray {
 public:
  /// Orientations are normalized on construction.
  SensorArray(std::vector<Vec3> positions, std::vector<Vec3> orientations);

  std::size_t size() const { return positions_.size(); }
  const std::vector<Vec3>& positions() const { return positions_; }
  const std::vector<Vec3>& orientations() const { return orientations_; }

 private:
  std::vector<Vec3> positions_;
  std::vector<Vec3> orientations_;
};

class SourceSpace {
 public:
  /// Orientations are normalized on construction. When `grid_spacing` is not
  /// given it is measured as the mean nearest-neighbour distance.
  SourceSpace(std::vector<Vec3> positions, std::vector<Vec3> orientations,
              std::optional<double> grid_spacing = std::nullopt);

  std::size_t size() const { return positions_.size(); }
  const std::vector<Vec3>& positions() const { return positions_; }
  const std::vector<Vec3>& orientations() const { return orientations_; }
  double grid_spacing() const { return grid_spacing_; }

 private:
  std::vector<Vec3> positions_;
  std::vector<Vec3> orientations_;
  double grid_spacing_ = 0.0;
};

/// M x P gain matrix; column p is the topography of grid point p.
/// Every column is finite with strictly positive norm.
class LeadField {
 public:
  explicit LeadField(Eigen::MatrixXd entries);

  Eigen::Index sensors() const { return entries_.rows(); }
  Eigen::Index sources() const { return entries_.cols(); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  /// FNV-1a hash of the entries, used to tie files to a lead field.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  Eigen::MatrixXd entries_;
  std::uint64_t fingerprint_ = 0;
};

struct SourceActivation {
  SourceActivation(std::vector<std::size_t> indices, Eigen::MatrixXd timecourses);

  std::size_t count() const { return indices.size(); }
  Eigen::Index samples() const { return timecourses.cols(); }

  std::vector<std::size_t> indices;
  Eigen::MatrixXd timecourses;  // Q x N
};

struct Recording {
  Eigen::MatrixXd measurements;  // signal + noise
  Eigen::MatrixXd signal;
  Eigen::MatrixXd noise;
  SnrDb snr_db;
  std::uint64_t rng_seed = 0;
};

/// Quasi-uniform golden-angle spiral on the upper hemisphere of `radius`, with
/// a seed-drawn azimuthal offset and seed-drawn tangential orientations.
SourceSpace build_synthetic_source_space(std::size_t count, double radius,
                                         std::uint64_t seed);

/// Radially oriented sensors spread over a spherical cap of `radius`
/// (polar angle up to 110 degrees).
SensorArray build_sensor_helmet(std::size_t count = 306, double radius = 0.12);

LeadField compute_lead_field(const SensorArray& sensors, const SourceSpace& space);

/// Single lead-field entry, evaluated directly from the dipole formula.
double dipole_field(const Vec3& sensor_position, const Vec3& sensor_orientation,
                    const Vec3& source_position, const Vec3& source_orientation);

Eigen::VectorXd topography(const LeadField& lead_field, std::size_t index);

Recording simulate(const LeadField& lead_field, const SourceActivation& activation,
                   SnrDb snr_db, std::uint64_t seed);

/// 20 log10(||signal||_F / ||noise||_F).
double measure_snr(const Eigen::MatrixXd& signal, const Eigen::MatrixXd& noise);

/// A + dA with i.i.d. Gaussian dA rescaled so ||dA||_F = rho ||A||_F.
LeadField perturb_lead_field(const LeadField& lead_field, double rho,
                             std::uint64_t seed);

/// Contents of a lead-field (MEGL) file. The sensor array is stored in an
/// optional trailing section.
struct Geometry {
  LeadField lead_field;
  SourceSpace space;
  std::optional<SensorArray> sensors;
};

/// MEGL layout, little-endian:
///   "MEGL" | u32 version | u32 M | u32 P | M*P f64 column-major entries |
///   P*3 f64 positions | P*3 f64 orientations |
///   [ "SENS" | u32 M | M*3 f64 positions | M*3 f64 orientations ]
inline constexpr std::uint32_t kLeadFieldFormatVersion = 1;

std::vector<std::uint8_t> encode_geometry(const Geometry& geometry);
Geometry decode_geometry(std::span<const std::uint8_t> bytes);
void save_geometry(const Geometry& geometry, const std::filesystem::path& path);
Geometry load_geometry(const std::filesystem::path& path);

}  // namespace megloc

#include "megloc/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "megloc/binary_io.hpp"
#include "megloc/errors.hpp"
#include "megloc/rng.hpp"

namespace megloc {

namespace {

constexpr double kGoldenAngle = 2.399963229728653;  // pi (3 - sqrt 5)

std::vector<Vec3> normalized(std::vector<Vec3> vectors, const char* what) {
  for (auto& v : vectors) {
    const double norm = v.norm();
    if (!std::isfinite(norm) || norm == 0.0) {
      throw InvalidArgument(std::string(what) + ": orientation has zero or non-finite norm");
    }
    v /= norm;
  }
  return vectors;
}

void require_finite(const std::vector<Vec3>& points, const char* what) {
  for (const auto& p : points) {
    if (!p.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite position");
  }
}

double mean_nearest_neighbour(const std::vector<Vec3>& points) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i != j) best = std::min(best, (points[i] - points[j]).squaredNorm());
    }
    total += std::sqrt(best);
  }
  return total / static_cast<double>(points.size());
}

std::span<const double> flat(const Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

std::span<const double> flat(const Vec3& v) { return {v.data(), 3}; }

}  // namespace

SensorArray::SensorArray(std::vector<Vec3> positions, std::vector<Vec3> orientations)
    : positions_(std::move(positions)),
      orientations_(normalized(std::move(orientations), "SensorArray")) {
  if (positions_.empty()) throw InvalidArgument("SensorArray: need at least one sensor");
  if (positions_.size() != orientations_.size()) {
    throw InvalidArgument("SensorArray: positions and orientations differ in length");
  }
  require_finite(positions_, "SensorArray");
}

SourceSpace::SourceSpace(std::vector<Vec3> positions, std::vector<Vec3> orientations,
                         std::optional<double> grid_spacing)
    : positions_(std::move(positions)),
      orientations_(normalized(std::move(orientations), "SourceSpace")) {
  if (positions_.size() < 2) throw InvalidArgument("SourceSpace: need at least two grid points");
  if (positions_.size() != orientations_.size()) {
    throw InvalidArgument("SourceSpace: positions and orientations differ in length");
  }
  require_finite(positions_, "SourceSpace");

  std::vector<Vec3> sorted = positions_;
  auto lex_less = [](const Vec3& a, const Vec3& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  };
  std::sort(sorted.begin(), sorted.end(), lex_less);
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("SourceSpace: duplicate grid positions");
  }
  grid_spacing_ = grid_spacing ? *grid_spacing : mean_nearest_neighbour(positions_);
}

LeadField::LeadField(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() < 1 || entries_.cols() < 1) {
    throw InvalidArgument("LeadField: empty matrix");
  }
  if (!entries_.allFinite()) throw NumericError("LeadField: non-finite entries");
  for (Eigen::Index p = 0; p < entries_.cols(); ++p) {
    if (!(entries_.col(p).norm() > 0.0)) {
      throw NumericError("LeadField: column " + std::to_string(p) + " has zero norm");
    }
  }
  fingerprint_ = io::fingerprint({entries_.data(), static_cast<std::size_t>(entries_.size())});
}

SourceActivation::SourceActivation(std::vector<std::size_t> idx, Eigen::MatrixXd tc)
    : indices(std::move(idx)), timecourses(std::move(tc)) {
  if (timecourses.rows() != static_cast<Eigen::Index>(indices.size())) {
    throw InvalidArgument("SourceActivation: timecourse rows must equal source count");
  }
  if (timecourses.cols() < 1) throw InvalidArgument("SourceActivation: need N >= 1 samples");
  auto sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("SourceActivation: duplicate source indices");
  }
}

SourceSpace build_synthetic_source_space(std::size_t count, double radius,
                                         std::uint64_t seed) {
  if (count < 2) throw InvalidArgument("build_synthetic_source_space: count must be >= 2");
  if (!(radius > 0.0)) throw InvalidArgument("build_synthetic_source_space: radius must be > 0");

  Rng rng(seed);
  const double azimuth_offset = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<Vec3> positions(count);
  std::vector<Vec3> orientations(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = (static_cast<double>(i) + 0.5) / static_cast<double>(count);
    const double ring = std::sqrt(1.0 - z * z);
    const double phi = azimuth_offset + kGoldenAngle * static_cast<double>(i);
    const Vec3 unit(ring * std::cos(phi), ring * std::sin(phi), z);
    positions[i] = radius * unit;

    // Tangent plane basis; z < 1 so unit is never parallel to e_z.
    const Vec3 east = Vec3::UnitZ().cross(unit).normalized();
    const Vec3 north = unit.cross(east);
    const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    orientations[i] = std::cos(psi) * east + std::sin(psi) * north;
  }
  const double spacing =
      std::sqrt(2.0 * std::numbers::pi * radius * radius / static_cast<double>(count));
  return SourceSpace(std::move(positions), std::move(orientations), spacing);
}

SensorArray build_sensor_helmet(std::size_t count, double radius) {
  if (count < 1) throw InvalidArgument("build_sensor_helmet: count must be >= 1");
  if (!(radius > 0.0)) throw InvalidArgument("build_sensor_helmet: radius must be > 0");
  const double z_min = std::cos(110.0 * std::numbers::pi / 180.0);
  std::vector<Vec3> positions(count);
  std::vector<Vec3> orientations(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = 1.0 - (1.0 - z_min) * (static_cast<double>(i) + 0.5) /
                               static_cast<double>(count);
    const double ring = std::sqrt(1.0 - z * z);
    const double phi = kGoldenAngle * static_cast<double>(i);
    const Vec3 unit(ring * std::cos(phi), ring * std::sin(phi), z);
    positions[i] = radius * unit;
    orientations[i] = unit;
  }
  return SensorArray(std::move(positions), std::move(orientations));
}

double dipole_field(const Vec3& sensor_position, const Vec3& sensor_orientation,
                    const Vec3& source_position, const Vec3& source_orientation) {
  const Vec3 d = sensor_position - source_position;
  const double dist = d.norm();
  if (!(dist > 1e-9)) {
    throw SingularityError("dipole_field: sensor and source positions coincide");
  }
  return source_orientation.cross(d).dot(sensor_orientation) / (dist * dist * dist);
}

LeadField compute_lead_field(const SensorArray& sensors, const SourceSpace& space) {
  double max_source_radius = 0.0;
  for (const auto& p : space.positions()) max_source_radius = std::max(max_source_radius, p.norm());
  for (const auto& r : sensors.positions()) {
    for (const auto& p : space.positions()) {
      if (!((r - p).norm() > 1e-9)) {
        throw SingularityError("compute_lead_field: a sensor coincides with a grid point");
      }
    }
    if (!(r.norm() > max_source_radius)) {
      throw InvalidArgument("compute_lead_field: every sensor must lie outside every source");
    }
  }

  const auto m_count = static_cast<Eigen::Index>(sensors.size());
  const auto p_count = static_cast<Eigen::Index>(space.size());
  Eigen::MatrixXd entries(m_count, p_count);
  for (Eigen::Index p = 0; p < p_count; ++p) {
    const auto& pos = space.positions()[static_cast<std::size_t>(p)];
    const auto& ori = space.orientations()[static_cast<std::size_t>(p)];
    for (Eigen::Index m = 0; m < m_count; ++m) {
      const auto s = static_cast<std::size_t>(m);
      entries(m, p) = dipole_field(sensors.positions()[s], sensors.orientations()[s], pos, ori);
    }
  }
  return LeadField(std::move(entries));
}

Eigen::VectorXd topography(const LeadField& lead_field, std::size_t index) {
  if (index >= static_cast<std::size_t>(lead_field.sources())) {
    throw InvalidArgument("topography: index " + std::to_string(index) + " out of range");
  }
  return lead_field.entries().col(static_cast<Eigen::Index>(index));
}

Recording simulate(const LeadField& lead_field, const SourceActivation& activation,
                   SnrDb snr_db, std::uint64_t seed) {
  const auto& a = lead_field.entries();
  const Eigen::Index n = activation.samples();
  Recording rec;
  rec.snr_db = snr_db;
  rec.rng_seed = seed;
  rec.signal = Eigen::MatrixXd::Zero(a.rows(), n);
  for (std::size_t q = 0; q < activation.count(); ++q) {
    const std::size_t idx = activation.indices[q];
    if (idx >= static_cast<std::size_t>(a.cols())) {
      throw InvalidArgument("simulate: source index " + std::to_string(idx) + " out of range");
    }
    rec.signal.noalias() +=
        a.col(static_cast<Eigen::Index>(idx)) * activation.timecourses.row(static_cast<Eigen::Index>(q));
  }

  rec.noise = Eigen::MatrixXd::Zero(a.rows(), n);
  if (snr_db) {
    const double signal_norm = rec.signal.norm();
    if (!(signal_norm > 0.0)) {
      throw InvalidArgument("simulate: SNR is undefined for a zero signal");
    }
    Rng rng(seed);
    for (Eigen::Index i = 0; i < rec.noise.size(); ++i) rec.noise.data()[i] = rng.normal();
    const double target_noise_norm = signal_norm / std::pow(10.0, *snr_db / 20.0);
    rec.noise *= target_noise_norm / rec.noise.norm();
  }
  rec.measurements = rec.signal + rec.noise;
  return rec;
}

double measure_snr(const Eigen::MatrixXd& signal, const Eigen::MatrixXd& noise) {
  if (signal.rows() != noise.rows() || signal.cols() != noise.cols()) {
    throw InvalidArgument("measure_snr: signal and noise shapes differ");
  }
  const double noise_norm = noise.norm();
  if (!(noise_norm > 0.0)) throw InvalidArgument("measure_snr: noise matrix is zero");
  return 20.0 * std::log10(signal.norm() / noise_norm);
}

LeadField perturb_lead_field(const LeadField& lead_field, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) {
    throw InvalidArgument("perturb_lead_field: rho must be finite and >= 0");
  }
  if (rho == 0.0) return lead_field;
  const auto& a = lead_field.entries();
  Eigen::MatrixXd delta(a.rows(), a.cols());
  Rng rng(seed);
  for (Eigen::Index i = 0; i < delta.size(); ++i) delta.data()[i] = rng.normal();
  delta *= rho * a.norm() / delta.norm();
  return LeadField(a + delta);
}

std::vector<std::uint8_t> encode_geometry(const Geometry& geometry) {
  const auto& a = geometry.lead_field.entries();
  if (static_cast<std::size_t>(a.cols()) != geometry.space.size()) {
    throw InvalidArgument("encode_geometry: lead field and source space disagree on P");
  }
  io::ByteWriter out;
  out.magic("MEGL");
  out.u32(kLeadFieldFormatVersion);
  out.u32(static_cast<std::uint32_t>(a.rows()));
  out.u32(static_cast<std::uint32_t>(a.cols()));
  out.f64s(flat(a));
  for (const auto& p : geometry.space.positions()) out.f64s(flat(p));
  for (const auto& q : geometry.space.orientations()) out.f64s(flat(q));
  if (geometry.sensors) {
    if (static_cast<Eigen::Index>(geometry.sensors->size()) != a.rows()) {
      throw InvalidArgument("encode_geometry: sensor count disagrees with M");
    }
    out.magic("SENS");
    out.u32(static_cast<std::uint32_t>(geometry.sensors->size()));
    for (const auto& r : geometry.sensors->positions()) out.f64s(flat(r));
    for (const auto& n : geometry.sensors->orientations()) out.f64s(flat(n));
  }
  return out.bytes();
}

namespace {

std::vector<Vec3> read_points(io::ByteReader& in, std::size_t count) {
  std::vector<Vec3> points(count);
  for (auto& p : points) in.f64s({p.data(), 3});
  return points;
}

}  // namespace

Geometry decode_geometry(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  in.expect_magic("MEGL");
  const auto version = in.u32();
  if (version != kLeadFieldFormatVersion) {
    throw FormatError("MEGL: unsupported version " + std::to_string(version));
  }
  const auto m = in.u32();
  const auto p = in.u32();
  if (m == 0 || p < 2) throw CorruptFileError("MEGL: invalid dimensions");
  if (in.remaining() < 8ull * (static_cast<std::size_t>(m) * p + 6ull * p)) {
    throw CorruptFileError("MEGL: file truncated");
  }
  Eigen::MatrixXd entries(m, p);
  in.f64s({entries.data(), static_cast<std::size_t>(entries.size())});
  auto positions = read_points(in, p);
  auto orientations = read_points(in, p);

  std::optional<SensorArray> sensors;
  if (in.remaining() > 0) {
    in.expect_magic("SENS");
    if (in.u32() != m) throw CorruptFileError("MEGL: sensor section disagrees with M");
    auto sensor_positions = read_points(in, m);
    auto sensor_orientations = read_points(in, m);
    sensors.emplace(std::move(sensor_positions), std::move(sensor_orientations));
  }
  if (in.remaining() != 0) throw CorruptFileError("MEGL: trailing bytes");

  return Geometry{LeadField(std::move(entries)),
                  SourceSpace(std::move(positions), std::move(orientations)),
                  std::move(sensors)};
}

void save_geometry(const Geometry& geometry, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_geometry(geometry));
}

Geometry load_geometry(const std::filesystem::path& path) {
  return decode_geometry(io::read_file(path));
}

}  // namespace megloc

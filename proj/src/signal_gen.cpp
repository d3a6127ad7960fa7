#include "megloc/signal_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "megloc/binary_io.hpp"
#include "megloc/errors.hpp"
#include "megloc/rng.hpp"

namespace megloc {

namespace {

constexpr int kSinusoidsPerSource = 3;
constexpr int kMaxRedraws = 1000;

Eigen::VectorXd draw_sinusoid_mixture(Rng& rng, std::size_t n) {
  const double nd = static_cast<double>(n);
  const double max_cycles = std::max(nd / 2.0, 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (int k = 0; k < kSinusoidsPerSource; ++k) {
    const double cycles = rng.uniform(0.5, max_cycles);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double weight = rng.uniform(0.5, 1.0);
    for (std::size_t t = 0; t < n; ++t) {
      v(static_cast<Eigen::Index>(t)) +=
          weight * std::sin(2.0 * std::numbers::pi * cycles * static_cast<double>(t) / nd + phase);
    }
  }
  return v;
}

// Rows of the result are zero-mean, mutually orthogonal, with squared norm N.
Eigen::MatrixXd orthonormal_sinusoid_basis(Rng& rng, std::size_t rows, std::size_t n) {
  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(rows), nn);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxRedraws && !accepted; ++attempt) {
      Eigen::VectorXd v = draw_sinusoid_mixture(rng, n);
      v.array() -= v.mean();
      const double raw_norm = v.norm();
      // Two passes of modified Gram-Schmidt keep the rows orthogonal to
      // working precision.
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index j = 0; j < ri; ++j) {
          const auto bj = basis.row(j).transpose();
          v -= (bj.dot(v) / bj.squaredNorm()) * bj;
        }
        v.array() -= v.mean();
      }
      if (v.norm() > 1e-6 * std::max(raw_norm, 1e-300)) {
        basis.row(ri) = v.transpose() * (std::sqrt(static_cast<double>(n)) / v.norm());
        accepted = true;
      }
    }
    if (!accepted) throw NumericError("sinusoid basis: could not draw an independent row");
  }
  return basis;
}

Eigen::MatrixXd correlation_matrix(const TimecourseSpec& spec, Rng& rng) {
  const auto q = static_cast<Eigen::Index>(spec.n_sources);
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(q, q);
  if (q == 1) return r;
  if (!spec.correlation.is_random()) {
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index j = 0; j < q; ++j)
        if (i != j) r(i, j) = spec.correlation.value();
    return r;
  }
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    for (Eigen::Index i = 0; i < q; ++i) {
      for (Eigen::Index j = i + 1; j < q; ++j) {
        r(i, j) = r(j, i) = rng.uniform(0.0, kRandomCorrelationMax);
      }
    }
    if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff() > 1e-9) {
      return r;
    }
  }
  throw NumericError("correlation_matrix: no feasible random correlation drawn");
}

}  // namespace

CorrelationTarget CorrelationTarget::fixed(double value) {
  if (!(std::abs(value) <= 1.0)) {
    throw InvalidArgument("correlation target must lie in [-1, 1]");
  }
  CorrelationTarget target;
  target.value_ = value;
  return target;
}

Eigen::MatrixXd psd_lower_factor(const Eigen::MatrixXd& r) {
  constexpr double tol = 1e-12;
  const Eigen::Index q = r.rows();
  if (r.cols() != q) throw InvalidArgument("psd_lower_factor: matrix not square");
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double d = r(j, j) - l.row(j).head(j).squaredNorm();
    if (d < -tol) throw InvalidArgument("correlation matrix is not positive semidefinite");
    if (d <= tol) {
      for (Eigen::Index i = j + 1; i < q; ++i) {
        const double rest = r(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
        if (std::abs(rest) > 1e-9) {
          throw InvalidArgument("correlation matrix is not positive semidefinite");
        }
      }
      continue;
    }
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < q; ++i) {
      l(i, j) = (r(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return l;
}

Eigen::MatrixXd sinusoid_mixture_timecourses(const TimecourseSpec& spec) {
  if (spec.n_samples < 1) throw InvalidArgument("timecourses: n_samples must be >= 1");
  if (spec.n_sources < 1) throw InvalidArgument("timecourses: n_sources must be >= 1");
  if (!(spec.amplitude > 0.0)) throw InvalidArgument("timecourses: amplitude must be > 0");

  const auto q = static_cast<Eigen::Index>(spec.n_sources);
  const auto n = static_cast<Eigen::Index>(spec.n_samples);
  if (n == 1) return Eigen::MatrixXd::Constant(q, 1, spec.amplitude);
  if (spec.n_samples < spec.n_sources + 1) {
    throw InvalidArgument("timecourses: need n_samples >= n_sources + 1 for correlation control");
  }

  Rng rng(spec.seed);
  const Eigen::MatrixXd lower = psd_lower_factor(correlation_matrix(spec, rng));
  const Eigen::MatrixXd basis = orthonormal_sinusoid_basis(rng, spec.n_sources, spec.n_samples);
  return spec.amplitude * (lower * basis);
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw InvalidArgument("pearson_correlation: vectors must be nonempty and equal length");
  }
  Eigen::Map<const Eigen::VectorXd> x(a.data(), static_cast<Eigen::Index>(a.size()));
  Eigen::Map<const Eigen::VectorXd> y(b.data(), static_cast<Eigen::Index>(b.size()));
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double sx = xc.norm();
  const double sy = yc.norm();
  if (!(sx > 0.0) || !(sy > 0.0)) {
    throw InvalidArgument("pearson_correlation: zero-variance input");
  }
  return std::clamp(xc.dot(yc) / (sx * sy), -1.0, 1.0);
}

void canonical_order(Eigen::MatrixXd& positions, std::vector<std::size_t>& indices) {
  const auto rows = static_cast<std::size_t>(positions.rows());
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (Eigen::Index c = 0; c < 3; ++c) {
      const double pa = positions(static_cast<Eigen::Index>(a), c);
      const double pb = positions(static_cast<Eigen::Index>(b), c);
      if (pa != pb) return pa < pb;
    }
    return false;
  });
  Eigen::MatrixXd sorted(positions.rows(), positions.cols());
  std::vector<std::size_t> sorted_indices(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    sorted.row(static_cast<Eigen::Index>(i)) = positions.row(static_cast<Eigen::Index>(order[i]));
    if (!indices.empty()) sorted_indices[i] = indices[order[i]];
  }
  positions = std::move(sorted);
  if (!indices.empty()) indices = std::move(sorted_indices);
}

namespace {

void validate(const LeadField& lead_field, const SourceSpace& space, const DatasetSpec& spec) {
  if (static_cast<std::size_t>(lead_field.sources()) != space.size()) {
    throw InvalidArgument("dataset: lead field and source space disagree on P");
  }
  if (spec.sources > space.size()) throw InvalidArgument("dataset: Q exceeds grid size P");
  if (spec.sources < 1 || spec.sources > 3) throw InvalidArgument("dataset: Q must be 1, 2 or 3");
}

}  // namespace

Example generate_example(const LeadField& lead_field, const SourceSpace& space,
                         const DatasetSpec& spec, std::uint64_t k) {
  validate(lead_field, space, spec);
  Rng rng(derive_seed(spec.seed, {k}));
  std::vector<std::size_t> indices;
  while (indices.size() < spec.sources) {
    const auto idx = static_cast<std::size_t>(rng.below(space.size()));
    if (std::find(indices.begin(), indices.end(), idx) == indices.end()) indices.push_back(idx);
  }
  TimecourseSpec tc;
  tc.n_samples = spec.n_samples;
  tc.n_sources = spec.sources;
  tc.correlation = spec.correlation;
  tc.amplitude = spec.amplitude;
  tc.seed = rng.next();
  const std::uint64_t noise_seed = rng.next();

  SourceActivation activation(indices, sinusoid_mixture_timecourses(tc));
  Recording rec = simulate(lead_field, activation, spec.snr_db, noise_seed);

  Example ex;
  ex.input = std::move(rec.measurements);
  ex.target.resize(static_cast<Eigen::Index>(spec.sources), 3);
  for (std::size_t q = 0; q < spec.sources; ++q) {
    ex.target.row(static_cast<Eigen::Index>(q)) = space.positions()[indices[q]].transpose();
  }
  canonical_order(ex.target, indices);
  ex.indices = std::move(indices);
  return ex;
}

LabeledDataset generate_dataset(const LeadField& lead_field, const SourceSpace& space,
                                const DatasetSpec& spec, std::size_t count) {
  if (count < 1) throw InvalidArgument("generate_dataset: count must be >= 1");
  validate(lead_field, space, spec);
  LabeledDataset data;
  data.inputs.reserve(count);
  data.targets.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Example ex = generate_example(lead_field, space, spec, k);
    data.inputs.push_back(std::move(ex.input));
    data.targets.push_back(std::move(ex.target));
  }
  data.metadata = DatasetMetadata{static_cast<std::size_t>(lead_field.sensors()),
                                  spec.n_samples,
                                  spec.sources,
                                  spec.snr_db,
                                  spec.seed,
                                  lead_field.fingerprint()};
  return data;
}

DatasetStream::DatasetStream(const LeadField& lead_field, const SourceSpace& space,
                             DatasetSpec spec, std::uint64_t count)
    : lead_field_(&lead_field), space_(&space), spec_(spec), count_(count) {
  if (count < 1) throw InvalidArgument("DatasetStream: count must be >= 1");
  validate(lead_field, space, spec);
}

std::optional<Example> DatasetStream::next() {
  if (position_ >= count_) return std::nullopt;
  return generate_example(*lead_field_, *space_, spec_, position_++);
}

std::vector<Example> DatasetStream::next_batch(std::size_t size) {
  std::vector<Example> batch;
  batch.reserve(size);
  while (batch.size() < size) {
    auto ex = next();
    if (!ex) break;
    batch.push_back(std::move(*ex));
  }
  return batch;
}

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& dataset) {
  const auto& meta = dataset.metadata;
  if (dataset.inputs.size() != dataset.targets.size()) {
    throw InvalidArgument("encode_dataset: inputs and targets differ in length");
  }
  io::ByteWriter out;
  out.magic("MEGD");
  out.u32(kDatasetFormatVersion);
  out.u32(static_cast<std::uint32_t>(meta.sensors));
  out.u32(static_cast<std::uint32_t>(meta.n_samples));
  out.u32(static_cast<std::uint32_t>(meta.sources));
  out.u64(dataset.size());
  out.f64(meta.snr_db.value_or(std::numeric_limits<double>::quiet_NaN()));
  out.u64(meta.seed);
  out.u64(meta.lead_field_fingerprint);
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    const auto& x = dataset.inputs[k];
    const auto& y = dataset.targets[k];
    if (static_cast<std::size_t>(x.rows()) != meta.sensors ||
        static_cast<std::size_t>(x.cols()) != meta.n_samples ||
        static_cast<std::size_t>(y.rows()) != meta.sources || y.cols() != 3) {
      throw InvalidArgument("encode_dataset: example " + std::to_string(k) + " has wrong shape");
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) out.f32(static_cast<float>(x.data()[i]));
    for (Eigen::Index r = 0; r < y.rows(); ++r)
      for (Eigen::Index c = 0; c < 3; ++c) out.f32(static_cast<float>(y(r, c)));
  }
  return out.bytes();
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  in.expect_magic("MEGD");
  const auto version = in.u32();
  if (version != kDatasetFormatVersion) {
    throw FormatError("MEGD: unsupported version " + std::to_string(version));
  }
  LabeledDataset data;
  auto& meta = data.metadata;
  meta.sensors = in.u32();
  meta.n_samples = in.u32();
  meta.sources = in.u32();
  const std::uint64_t count = in.u64();
  const double snr = in.f64();
  meta.snr_db = std::isnan(snr) ? kNoiseless : SnrDb(snr);
  meta.seed = in.u64();
  meta.lead_field_fingerprint = in.u64();

  const std::size_t per_example = 4 * (meta.sensors * meta.n_samples + meta.sources * 3);
  if (per_example == 0 || in.remaining() != per_example * count) {
    throw CorruptFileError("MEGD: payload size does not match header");
  }
  const auto m = static_cast<Eigen::Index>(meta.sensors);
  const auto n = static_cast<Eigen::Index>(meta.n_samples);
  const auto q = static_cast<Eigen::Index>(meta.sources);
  data.inputs.reserve(count);
  data.targets.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    Eigen::MatrixXd x(m, n);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = in.f32();
    Eigen::MatrixXd y(q, 3);
    for (Eigen::Index r = 0; r < q; ++r)
      for (Eigen::Index c = 0; c < 3; ++c) y(r, c) = in.f32();
    data.inputs.push_back(std::move(x));
    data.targets.push_back(std::move(y));
  }
  return data;
}

void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_dataset(dataset));
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

}  // namespace megloc

#include "megloc/subspace.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <string>

#include "megloc/errors.hpp"

namespace megloc {

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kProjectedNullTolerance = 1e-8;

void check_request(const Eigen::MatrixXd& y, const LeadField& lead_field,
                   const SourceSpace& space, std::size_t sources) {
  if (y.rows() != lead_field.sensors()) {
    throw InvalidArgument("localize: measurement rows do not match lead-field sensors");
  }
  if (static_cast<std::size_t>(lead_field.sources()) != space.size()) {
    throw InvalidArgument("localize: lead field and source space disagree on P");
  }
  if (sources < 1 || sources >= static_cast<std::size_t>(y.rows()) ||
      sources > space.size()) {
    throw InvalidArgument("localize: need 1 <= Q < M and Q <= P");
  }
}

std::size_t argmax_lowest(const Eigen::VectorXd& values) {
  std::size_t best = 0;
  for (Eigen::Index p = 1; p < values.size(); ++p) {
    if (values(p) > values(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(p);
  }
  return best;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& y) {
  if (y.cols() < 1) throw InvalidArgument("sample_covariance: need N >= 1");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(y.rows(), y.rows());
  c.selfadjointView<Eigen::Lower>().rankUpdate(y, 1.0 / static_cast<double>(y.cols()));
  return c.selfadjointView<Eigen::Lower>();
}

SignalSubspace signal_subspace(const Eigen::MatrixXd& covariance, std::size_t rank) {
  const Eigen::Index m = covariance.rows();
  if (covariance.cols() != m) throw InvalidArgument("signal_subspace: matrix not square");
  if (rank < 1 || static_cast<Eigen::Index>(rank) >= m) {
    throw InvalidArgument("signal_subspace: need 1 <= rank < M");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  if (solver.info() != Eigen::Success) throw NumericError("signal_subspace: eigensolver failed");

  const auto r = static_cast<Eigen::Index>(rank);
  SignalSubspace out{Eigen::MatrixXd(m, r), Eigen::VectorXd(r)};
  for (Eigen::Index k = 0; k < r; ++k) {
    // Eigen orders eigenvalues ascending.
    const Eigen::Index src = m - 1 - k;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index peak = 0;
    v.cwiseAbs().maxCoeff(&peak);
    if (v(peak) < 0.0) v = -v;
    out.basis.col(k) = v;
    out.eigenvalues(k) = std::max(0.0, solver.eigenvalues()(src));
  }
  return out;
}

Eigen::VectorXd music_map(const SignalSubspace& subspace, const Eigen::MatrixXd& gain,
                          const Eigen::VectorXd& reference_norms, double null_tolerance) {
  if (subspace.basis.rows() != gain.rows()) {
    throw InvalidArgument("music_map: subspace and lead field disagree on M");
  }
  const Eigen::MatrixXd projections = subspace.basis.transpose() * gain;
  Eigen::VectorXd values(gain.cols());
  for (Eigen::Index p = 0; p < gain.cols(); ++p) {
    const double norm = gain.col(p).norm();
    if (!(norm > null_tolerance * reference_norms(p))) {
      values(p) = 0.0;
    } else {
      values(p) = projections.col(p).norm() / norm;
    }
  }
  return values;
}

Eigen::VectorXd music_map(const SignalSubspace& subspace, const Eigen::MatrixXd& gain) {
  return music_map(subspace, gain, Eigen::VectorXd::Zero(gain.cols()), 0.0);
}

Eigen::VectorXd music_map(const SignalSubspace& subspace, const LeadField& lead_field) {
  return music_map(subspace, lead_field.entries());
}

Eigen::MatrixXd orthogonal_projector(const Eigen::MatrixXd& b) {
  const Eigen::Index m = b.rows();
  const Eigen::Index k = b.cols();
  Eigen::MatrixXd pi = Eigen::MatrixXd::Identity(m, m);
  if (k == 0) return pi;
  if (k >= m) throw NumericError("orthogonal_projector: too many topographies");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(std::abs(r(j, j)) > 1e-10 * b.col(j).norm())) {
      throw NumericError("orthogonal_projector: topographies are linearly dependent");
    }
  }
  const Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(m, k);
  pi.noalias() -= basis * basis.transpose();
  return pi;
}

LocalizationResult rap_music_localize(const Eigen::MatrixXd& y, const LeadField& lead_field,
                                      const SourceSpace& space, std::size_t sources) {
  const auto start = Clock::now();
  check_request(y, lead_field, space, sources);
  const Eigen::MatrixXd& a = lead_field.entries();
  const Eigen::VectorXd column_norms = a.colwise().norm().transpose();

  LocalizationResult result;
  Eigen::MatrixXd found(a.rows(), 0);
  Eigen::MatrixXd projected_gain(a.rows(), a.cols());
  for (std::size_t k = 0; k < sources; ++k) {
    const Eigen::MatrixXd pi = orthogonal_projector(found);
    const Eigen::MatrixXd projected_data = pi * y;
    projected_gain.noalias() = pi * a;

    const SignalSubspace sub =
        signal_subspace(sample_covariance(projected_data), sources - k);
    const Eigen::VectorXd map =
        music_map(sub, projected_gain, column_norms, kProjectedNullTolerance);
    const std::size_t best = argmax_lowest(map);

    result.indices.push_back(best);
    result.positions.push_back(space.positions()[best]);
    result.localizer_values.push_back(map(static_cast<Eigen::Index>(best)));
    found.conservativeResize(Eigen::NoChange, found.cols() + 1);
    found.col(found.cols() - 1) = a.col(static_cast<Eigen::Index>(best));
  }
  result.elapsed_seconds = seconds_since(start);
  return result;
}

NeighborGraph build_neighbor_graph(const SourceSpace& space, std::size_t k) {
  const std::size_t p = space.size();
  const std::size_t kk = std::min(k, p - 1);
  const auto& pos = space.positions();
  NeighborGraph graph(p);
  std::vector<std::pair<double, std::size_t>> dist(p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) dist[j] = {(pos[i] - pos[j]).squaredNorm(), j};
    dist[i].first = std::numeric_limits<double>::infinity();
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    graph[i].reserve(kk);
    for (std::size_t n = 0; n < kk; ++n) graph[i].push_back(dist[n].second);
  }
  return graph;
}

LocalizationResult music_localize(const Eigen::MatrixXd& y, const LeadField& lead_field,
                                  const SourceSpace& space, const NeighborGraph& graph,
                                  std::size_t sources) {
  const auto start = Clock::now();
  check_request(y, lead_field, space, sources);
  if (graph.size() != space.size()) {
    throw InvalidArgument("music_localize: neighbour graph does not match the grid");
  }
  const SignalSubspace sub = signal_subspace(sample_covariance(y), sources);
  const Eigen::VectorXd map = music_map(sub, lead_field);

  std::vector<std::size_t> maxima;
  for (std::size_t p = 0; p < graph.size(); ++p) {
    const double v = map(static_cast<Eigen::Index>(p));
    const bool is_max = std::all_of(graph[p].begin(), graph[p].end(), [&](std::size_t n) {
      const double w = map(static_cast<Eigen::Index>(n));
      return v > w || (v == w && p < n);
    });
    if (is_max) maxima.push_back(p);
  }
  std::stable_sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b) {
    return map(static_cast<Eigen::Index>(a)) > map(static_cast<Eigen::Index>(b));
  });

  LocalizationResult result;
  for (std::size_t i = 0; i < std::min(sources, maxima.size()); ++i) {
    result.indices.push_back(maxima[i]);
    result.positions.push_back(space.positions()[maxima[i]]);
    result.localizer_values.push_back(map(static_cast<Eigen::Index>(maxima[i])));
  }
  result.incomplete = result.indices.size() < sources;
  result.elapsed_seconds = seconds_since(start);
  return result;
}

}  // namespace megloc

#pragma once

// Covariance-based scanning localizers: MUSIC and recursive RAP-MUSIC over a
// fixed-orientation lead field.

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "megloc/forward_model.hpp"

namespace megloc {

struct SignalSubspace {
  Eigen::MatrixXd basis;        // M x r, orthonormal columns
  Eigen::VectorXd eigenvalues;  // r values, descending, >= 0
};

struct LocalizationResult {
  std::vector<std::size_t> indices;
  std::vector<Vec3> positions;
  std::vector<double> localizer_values;
  double elapsed_seconds = 0.0;
  /// Set when fewer than the requested number of sources were found.
  bool incomplete = false;
};

/// Y Y^T / N.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& measurements);

/// Top-`rank` eigenpairs of symmetric C. Each eigenvector is signed so that
/// its largest-magnitude component is positive.
SignalSubspace signal_subspace(const Eigen::MatrixXd& covariance, std::size_t rank);

/// Subspace correlation ||U^T a_p|| / ||a_p|| for every column of `gain`.
/// Columns whose norm is at most `null_tolerance` times `reference_norms(p)`
/// score 0 (used for columns projected out during RAP-MUSIC).
Eigen::VectorXd music_map(const SignalSubspace& subspace, const Eigen::MatrixXd& gain);
Eigen::VectorXd music_map(const SignalSubspace& subspace, const Eigen::MatrixXd& gain,
                          const Eigen::VectorXd& reference_norms, double null_tolerance);
Eigen::VectorXd music_map(const SignalSubspace& subspace, const LeadField& lead_field);

/// I - B (B^T B)^{-1} B^T, computed from a Householder QR of B. Throws
/// NumericError when B is rank deficient.
Eigen::MatrixXd orthogonal_projector(const Eigen::MatrixXd& topographies);

/// RAP-MUSIC: at step k (k = 1..Q) project the found topographies out of the
/// data and of every lead-field column, scan with a rank Q-k+1 signal
/// subspace, and keep the global maximum (lowest index on ties).
LocalizationResult rap_music_localize(const Eigen::MatrixXd& measurements,
                                      const LeadField& lead_field, const SourceSpace& space,
                                      std::size_t sources);

/// k-nearest-neighbour lists over the grid positions (excluding self).
using NeighborGraph = std::vector<std::vector<std::size_t>>;
NeighborGraph build_neighbor_graph(const SourceSpace& space, std::size_t k = 6);

/// Non-recursive MUSIC: one rank-Q map, then the Q largest local maxima over
/// `graph`. A point is a local maximum when it beats every neighbour, with
/// equal values resolved in favour of the lower index.
LocalizationResult music_localize(const Eigen::MatrixXd& measurements,
                                  const LeadField& lead_field, const SourceSpace& space,
                                  const NeighborGraph& graph, std::size_t sources);

}  // namespace megloc

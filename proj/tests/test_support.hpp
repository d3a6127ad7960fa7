#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "megloc/forward_model.hpp"
#include "megloc/network.hpp"
#include "megloc/rng.hpp"

namespace megloc::testing {

struct SmallGeometry {
  SensorArray sensors;
  SourceSpace space;
  LeadField lead_field;
};

inline SmallGeometry make_geometry(std::size_t sensors, std::size_t sources,
                                   std::uint64_t seed = 1) {
  auto array = build_sensor_helmet(sensors, 0.12);
  auto space = build_synthetic_source_space(sources, 0.08, seed);
  auto lf = compute_lead_field(array, space);
  return {std::move(array), std::move(space), std::move(lf)};
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

/// Exhaustive two-dipole scan: the pair whose topographies leave the smallest
/// least-squares residual ||Y - A A^+ Y||_F.
inline std::pair<std::size_t, std::size_t> least_squares_pair(const Eigen::MatrixXd& y,
                                                              const Eigen::MatrixXd& gain) {
  std::pair<std::size_t, std::size_t> best{0, 1};
  double best_residual = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < gain.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < gain.cols(); ++j) {
      Eigen::MatrixXd a(gain.rows(), 2);
      a << gain.col(i), gain.col(j);
      const Eigen::MatrixXd coeffs = a.colPivHouseholderQr().solve(y);
      const double residual = (y - a * coeffs).norm();
      if (residual < best_residual) {
        best_residual = residual;
        best = {static_cast<std::size_t>(i), static_cast<std::size_t>(j)};
      }
    }
  }
  return best;
}

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst_relative = 0.0;
};

/// Compares analytic gradients with central differences (step 1e-5) at
/// `count` randomly chosen parameters. A component passes when the absolute
/// difference is within 1e-6 or the relative difference within 1e-4.
inline GradientCheck check_gradients(const NetworkModel& model, const Eigen::MatrixXd& inputs,
                                     const Eigen::MatrixXd& targets, Regularization reg,
                                     double alpha, std::size_t count, std::uint64_t seed) {
  Gradients grads;
  loss_and_gradients(model, inputs, targets, reg, alpha, grads);
  const Eigen::VectorXd analytic = flatten_gradients(grads);
  const Eigen::VectorXd theta = flatten_parameters(model);
  Rng rng(seed);
  GradientCheck out;
  NetworkModel probe = model;
  Gradients scratch;
  for (std::size_t n = 0; n < count; ++n) {
    const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(theta.size())));
    const double h = 1e-5;
    Eigen::VectorXd shifted = theta;
    shifted(k) = theta(k) + h;
    assign_parameters(probe, std::span<const double>(shifted.data(), static_cast<std::size_t>(shifted.size())));
    const double up = loss_and_gradients(probe, inputs, targets, reg, alpha, scratch).loss;
    shifted(k) = theta(k) - h;
    assign_parameters(probe, std::span<const double>(shifted.data(), static_cast<std::size_t>(shifted.size())));
    const double down = loss_and_gradients(probe, inputs, targets, reg, alpha, scratch).loss;
    const double numeric = (up - down) / (2.0 * h);
    const double diff = std::abs(numeric - analytic(k));
    const double rel = diff / std::max(std::abs(numeric), std::abs(analytic(k)));
    ++out.checked;
    if (diff > 1e-6 && rel > 1e-4) ++out.failures;
    if (diff > 1e-6) out.worst_relative = std::max(out.worst_relative, rel);
  }
  return out;
}

}  // namespace megloc::testing

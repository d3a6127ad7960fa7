#pragma once

// Dense and space-time convolutional regression networks mapping sensor
// measurements to source coordinates, with exact reverse-mode gradients.
//
// Batches are column-stacked: an input batch is (M*N) x B where column b is the
// column-major flattening of example b's M x N measurement matrix; a target
// batch is (3Q) x B where column b holds the Q coordinate rows concatenated.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace megloc {

enum class Activation : std::uint32_t { sigmoid = 0, relu = 1, identity = 2 };

/// Optional fixed preprocessing: unit_rms divides each input by its RMS value,
/// which removes the overall source amplitude from what the network sees.
enum class InputScaling : std::uint32_t { none = 0, unit_rms = 1 };

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::sigmoid;
};

/// Bank of L space-time filters. Row l of `kernels` is filter l's M x T
/// coefficient block flattened row-major (index m*T + tau). Features are
///   C_l(t) = sum_m sum_tau K_l(m, tau) Y(m, t + tau) + b_l,  t = 0..N-T
/// (cross-correlation, no kernel flip) and are passed on without activation,
/// flattened filter-major: feature index l*(N-T+1) + t.
struct ConvLayer {
  Eigen::MatrixXd kernels;  // L x (M*T)
  Eigen::VectorXd biases;   // L
  std::size_t taps = 1;     // T
};

struct NetworkModel {
  std::size_t input_rows = 0;  // M
  std::size_t input_cols = 1;  // N
  InputScaling scaling = InputScaling::none;
  std::optional<ConvLayer> conv;
  std::vector<DenseLayer> dense;
  /// Fixed (non-trainable) output transform: output = offset + scale * z,
  /// where z is the last dense layer's value. Empty vectors mean identity.
  /// Expressing targets in grid-standardized units keeps plain SGD stable at
  /// useful step sizes.
  Eigen::VectorXd output_offset;
  Eigen::VectorXd output_scale;
  /// Fingerprint of the lead field the model was trained against (0 = none).
  std::uint64_t lead_field_fingerprint = 0;

  std::size_t input_size() const { return input_rows * input_cols; }
  std::size_t output_dim() const;
  std::size_t conv_output_width() const;
  std::size_t parameter_count() const;
};

struct ArchitectureSpec {
  std::size_t input_rows = 0;
  std::size_t input_cols = 1;
  std::size_t conv_filters = 0;  // 0 = no convolutional front end
  std::size_t conv_taps = 5;
  std::vector<std::size_t> hidden;
  Activation hidden_activation = Activation::sigmoid;
  std::size_t outputs = 3;
  InputScaling scaling = InputScaling::unit_rms;
  /// Multiplier on the uniform initialization bound.
  double init_gain = 1.0;
};

inline const std::vector<std::size_t> kDeepMegHidden{3000, 2500, 1200};

/// Builds the network and draws weights uniformly in +-sqrt(6/(fan_in+fan_out))
/// (convolution: fan_in = M*T, fan_out = L*T); biases start at zero.
NetworkModel build_network(const ArchitectureSpec& spec, std::uint64_t seed);

/// FC(3000) - FC(2500) - FC(1200) sigmoid stack with a linear 3Q output.
NetworkModel build_mlp(std::size_t sensors, std::size_t sources, std::uint64_t seed = 0);

/// Conv1D(L filters, T taps) front end feeding the same dense stack.
NetworkModel build_cnn(std::size_t sensors, std::size_t samples, std::size_t sources,
                       std::size_t filters = 32, std::size_t taps = 5,
                       std::uint64_t seed = 0);

double activate(Activation f, double z);

/// Sets the output transform so that z = 0 maps to the grid centroid and one
/// unit of z spans one standard deviation of the grid along each axis.
void standardize_outputs(NetworkModel& model, std::span<const Eigen::Vector3d> grid_positions);

/// Flattens one M x N measurement matrix (or M-vector) into a batch column.
Eigen::VectorXd flatten_input(const Eigen::MatrixXd& measurement);
/// Flattens Q x 3 coordinates into a 3Q vector (row after row).
Eigen::VectorXd flatten_target(const Eigen::MatrixXd& coordinates);

/// Network output for a batch, (3Q) x B.
Eigen::MatrixXd forward_batch(const NetworkModel& model, const Eigen::MatrixXd& inputs);

/// Network output for one M x N (or M x 1) measurement.
Eigen::VectorXd forward_pass(const NetworkModel& model, const Eigen::MatrixXd& measurement);

/// Q x 3 coordinates: rows are output[0..3), output[3..6), ...
Eigen::MatrixXd predict_locations(const NetworkModel& model, const Eigen::MatrixXd& measurement);

enum class Regularization : std::uint32_t { none = 0, tikhonov = 1, l1 = 2 };

struct LayerGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

struct Gradients {
  std::optional<LayerGradient> conv;
  std::vector<LayerGradient> dense;
};

struct LossBreakdown {
  double loss = 0.0;       // data_loss + weight * penalty
  double data_loss = 0.0;  // mean squared coordinate error
  double reg_term = 0.0;   // weight * penalty
};

/// Penalty on all weight matrices (never biases): sum W^2 or sum |W|.
double regularization_penalty(const NetworkModel& model, Regularization type);

/// Mean over the batch of the mean squared error over 3Q coordinates, plus the
/// weighted penalty. Fills `grads` (reusing its storage) with exact gradients.
/// Throws NumericError naming the layer when an activation is non-finite.
LossBreakdown loss_and_gradients(const NetworkModel& model, const Eigen::MatrixXd& inputs,
                                 const Eigen::MatrixXd& targets, Regularization reg_type,
                                 double reg_weight, Gradients& grads);

/// In-place update: theta -= learning_rate * grad.
void apply_sgd(NetworkModel& model, const Gradients& grads, double learning_rate);

/// Pure variant of apply_sgd.
NetworkModel sgd_step(const NetworkModel& model, const Gradients& grads, double learning_rate);

/// Parameters in file order: conv kernels (row-major) and biases, then each
/// dense layer's weights (row-major) and biases.
Eigen::VectorXd flatten_parameters(const NetworkModel& model);
void assign_parameters(NetworkModel& model, std::span<const double> values);
Eigen::VectorXd flatten_gradients(const Gradients& grads);

/// MEGM layout, little-endian:
///   "MEGM" | u32 version | u64 lead-field fingerprint | u32 M | u32 N |
///   u32 input scaling | u32 L | u32 T | u32 dense count |
///   per dense layer: u32 in | u32 out | u32 activation |
///   u32 output-transform flag | [outputs f64 offsets | outputs f64 scales] |
///   parameters as f64 in flatten_parameters order
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_model(const NetworkModel& model);
NetworkModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_model(const std::filesystem::path& path);

std::string_view to_string(Activation f);

}  // namespace megloc

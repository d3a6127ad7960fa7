#include "megloc/network.hpp"

#include <cmath>
#include <string>

#include "megloc/binary_io.hpp"
#include "megloc/errors.hpp"
#include "megloc/rng.hpp"

namespace megloc {

namespace {

struct ForwardCache {
  Eigen::MatrixXd patches;                   // (M*T) x (B*W), conv only
  std::vector<Eigen::MatrixXd> activations;  // [0] feeds dense layer 0
};

Eigen::MatrixXd scale_inputs(const NetworkModel& model, const Eigen::MatrixXd& inputs) {
  if (model.scaling == InputScaling::none) return inputs;
  Eigen::MatrixXd out = inputs;
  const double root_len = std::sqrt(static_cast<double>(inputs.rows()));
  for (Eigen::Index b = 0; b < out.cols(); ++b) {
    const double norm = out.col(b).norm();
    if (norm > 0.0) out.col(b) *= root_len / norm;
  }
  return out;
}

void im2col(const Eigen::MatrixXd& inputs, std::size_t rows, std::size_t cols,
            std::size_t taps, Eigen::MatrixXd& patches) {
  const auto m_count = static_cast<Eigen::Index>(rows);
  const auto t_count = static_cast<Eigen::Index>(taps);
  const auto width = static_cast<Eigen::Index>(cols - taps + 1);
  patches.resize(m_count * t_count, inputs.cols() * width);
  for (Eigen::Index b = 0; b < inputs.cols(); ++b) {
    for (Eigen::Index t = 0; t < width; ++t) {
      auto column = patches.col(b * width + t);
      for (Eigen::Index m = 0; m < m_count; ++m) {
        for (Eigen::Index tau = 0; tau < t_count; ++tau) {
          column(m * t_count + tau) = inputs(m + (t + tau) * m_count, b);
        }
      }
    }
  }
}

void apply_activation(Activation f, Eigen::MatrixXd& z) {
  switch (f) {
    case Activation::sigmoid:
      z = (1.0 + (-z.array()).exp()).inverse().matrix();
      break;
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::identity:
      break;
  }
}

// dZ = delta * f'(z), expressed through the activation output h = f(z).
void activation_backward(Activation f, const Eigen::MatrixXd& h, Eigen::MatrixXd& delta) {
  switch (f) {
    case Activation::sigmoid:
      delta.array() *= h.array() * (1.0 - h.array());
      break;
    case Activation::relu:
      delta.array() *= (h.array() > 0.0).cast<double>();
      break;
    case Activation::identity:
      break;
  }
}

void check_finite(const Eigen::MatrixXd& values, const std::string& layer) {
  if (!values.allFinite()) throw NumericError("non-finite activation in " + layer);
}

void check_batch(const NetworkModel& model, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.rows()) != model.input_size()) {
    throw InvalidArgument("network: input size " + std::to_string(inputs.rows()) +
                          " does not match model input " + std::to_string(model.input_size()));
  }
  if (model.dense.empty()) throw InvalidArgument("network: model has no dense layers");
  const auto outputs = static_cast<Eigen::Index>(model.output_dim());
  if (model.output_scale.size() != model.output_offset.size() ||
      (model.output_scale.size() != 0 && model.output_scale.size() != outputs)) {
    throw InvalidArgument("network: output transform does not match the output width");
  }
}

void forward(const NetworkModel& model, const Eigen::MatrixXd& inputs, ForwardCache& cache) {
  check_batch(model, inputs);
  cache.activations.resize(model.dense.size() + 1);
  Eigen::MatrixXd scaled = scale_inputs(model, inputs);
  if (model.conv) {
    const auto& conv = *model.conv;
    const auto width = static_cast<Eigen::Index>(model.conv_output_width());
    const Eigen::Index filters = conv.kernels.rows();
    im2col(scaled, model.input_rows, model.input_cols, conv.taps, cache.patches);
    Eigen::MatrixXd features = conv.kernels * cache.patches;
    features.colwise() += conv.biases;
    check_finite(features, "conv layer");
    auto& flat = cache.activations[0];
    flat.resize(filters * width, inputs.cols());
    for (Eigen::Index b = 0; b < inputs.cols(); ++b)
      for (Eigen::Index l = 0; l < filters; ++l)
        for (Eigen::Index t = 0; t < width; ++t) flat(l * width + t, b) = features(l, b * width + t);
  } else {
    cache.activations[0] = std::move(scaled);
  }
  for (std::size_t i = 0; i < model.dense.size(); ++i) {
    const auto& layer = model.dense[i];
    auto& out = cache.activations[i + 1];
    out.noalias() = layer.weights * cache.activations[i];
    out.colwise() += layer.biases;
    apply_activation(layer.activation, out);
    check_finite(out, "dense layer " + std::to_string(i));
  }
}

bool has_output_transform(const NetworkModel& model) {
  return model.output_scale.size() > 0;
}

Eigen::MatrixXd transform_outputs(const NetworkModel& model, const Eigen::MatrixXd& z) {
  if (!has_output_transform(model)) return z;
  Eigen::MatrixXd out = model.output_scale.asDiagonal() * z;
  out.colwise() += model.output_offset;
  return out;
}

void glorot(Eigen::MatrixXd& w, double fan_in, double fan_out, double gain, Rng& rng) {
  const double limit = gain * std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
}

// Row-major traversal shared by flatten/assign/encode.
template <typename Matrix, typename Visit>
void visit_row_major(Matrix& m, Visit&& visit) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) visit(m(r, c));
}

template <typename Model, typename Visit>
void visit_parameters(Model& model, Visit&& visit) {
  if (model.conv) {
    visit_row_major(model.conv->kernels, visit);
    visit_row_major(model.conv->biases, visit);
  }
  for (auto& layer : model.dense) {
    visit_row_major(layer.weights, visit);
    visit_row_major(layer.biases, visit);
  }
}

}  // namespace

std::size_t NetworkModel::conv_output_width() const {
  if (!conv) return 0;
  return input_cols - conv->taps + 1;
}

std::size_t NetworkModel::output_dim() const {
  return dense.empty() ? 0 : static_cast<std::size_t>(dense.back().weights.rows());
}

std::size_t NetworkModel::parameter_count() const {
  std::size_t count = 0;
  if (conv) count += static_cast<std::size_t>(conv->kernels.size() + conv->biases.size());
  for (const auto& layer : dense) {
    count += static_cast<std::size_t>(layer.weights.size() + layer.biases.size());
  }
  return count;
}

NetworkModel build_network(const ArchitectureSpec& spec, std::uint64_t seed) {
  if (spec.input_rows < 1 || spec.input_cols < 1 || spec.outputs < 1) {
    throw InvalidArgument("build_network: dimensions must be positive");
  }
  NetworkModel model;
  model.input_rows = spec.input_rows;
  model.input_cols = spec.input_cols;
  model.scaling = spec.scaling;
  Rng rng(seed);

  std::size_t width = spec.input_rows * spec.input_cols;
  if (spec.conv_filters > 0) {
    if (spec.conv_taps < 1 || spec.input_cols < spec.conv_taps) {
      throw InvalidArgument("build_network: need 1 <= T <= N for the convolution");
    }
    ConvLayer conv;
    conv.taps = spec.conv_taps;
    const auto filters = static_cast<Eigen::Index>(spec.conv_filters);
    conv.kernels.resize(filters, static_cast<Eigen::Index>(spec.input_rows * spec.conv_taps));
    conv.biases = Eigen::VectorXd::Zero(filters);
    glorot(conv.kernels, static_cast<double>(spec.input_rows * spec.conv_taps),
           static_cast<double>(spec.conv_filters * spec.conv_taps), spec.init_gain, rng);
    model.conv = std::move(conv);
    width = spec.conv_filters * (spec.input_cols - spec.conv_taps + 1);
  }

  std::vector<std::size_t> sizes = spec.hidden;
  sizes.push_back(spec.outputs);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    DenseLayer layer;
    layer.weights.resize(static_cast<Eigen::Index>(sizes[i]), static_cast<Eigen::Index>(width));
    layer.biases = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[i]));
    layer.activation = (i + 1 == sizes.size()) ? Activation::identity : spec.hidden_activation;
    glorot(layer.weights, static_cast<double>(width), static_cast<double>(sizes[i]), spec.init_gain, rng);
    model.dense.push_back(std::move(layer));
    width = sizes[i];
  }
  return model;
}

NetworkModel build_mlp(std::size_t sensors, std::size_t sources, std::uint64_t seed) {
  if (sources < 1 || sources > 3) throw InvalidArgument("build_mlp: Q must be 1, 2 or 3");
  ArchitectureSpec spec;
  spec.input_rows = sensors;
  spec.hidden = kDeepMegHidden;
  spec.outputs = 3 * sources;
  return build_network(spec, seed);
}

NetworkModel build_cnn(std::size_t sensors, std::size_t samples, std::size_t sources,
                       std::size_t filters, std::size_t taps, std::uint64_t seed) {
  if (sources < 1 || sources > 3) throw InvalidArgument("build_cnn: Q must be 1, 2 or 3");
  if (samples < taps) throw InvalidArgument("build_cnn: need N >= T");
  if (filters < 1) throw InvalidArgument("build_cnn: need L >= 1");
  ArchitectureSpec spec;
  spec.input_rows = sensors;
  spec.input_cols = samples;
  spec.conv_filters = filters;
  spec.conv_taps = taps;
  spec.hidden = kDeepMegHidden;
  spec.outputs = 3 * sources;
  return build_network(spec, seed);
}

double activate(Activation f, double z) {
  switch (f) {
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::relu:
      return z > 0.0 ? z : 0.0;
    case Activation::identity:
      return z;
  }
  return z;
}

Eigen::VectorXd flatten_input(const Eigen::MatrixXd& measurement) {
  return Eigen::Map<const Eigen::VectorXd>(measurement.data(), measurement.size());
}

Eigen::VectorXd flatten_target(const Eigen::MatrixXd& coordinates) {
  Eigen::VectorXd out(coordinates.size());
  for (Eigen::Index r = 0; r < coordinates.rows(); ++r)
    for (Eigen::Index c = 0; c < coordinates.cols(); ++c)
      out(r * coordinates.cols() + c) = coordinates(r, c);
  return out;
}

Eigen::MatrixXd forward_batch(const NetworkModel& model, const Eigen::MatrixXd& inputs) {
  ForwardCache cache;
  forward(model, inputs, cache);
  return transform_outputs(model, cache.activations.back());
}

void standardize_outputs(NetworkModel& model, std::span<const Eigen::Vector3d> grid_positions) {
  const std::size_t outputs = model.output_dim();
  if (outputs % 3 != 0 || grid_positions.size() < 2) {
    throw InvalidArgument("standardize_outputs: need a 3Q output and at least two grid points");
  }
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : grid_positions) mean += p;
  mean /= static_cast<double>(grid_positions.size());
  Eigen::Vector3d var = Eigen::Vector3d::Zero();
  for (const auto& p : grid_positions) var += (p - mean).cwiseAbs2();
  Eigen::Vector3d scale = (var / static_cast<double>(grid_positions.size())).cwiseSqrt();
  for (int c = 0; c < 3; ++c) {
    if (!(scale(c) > 0.0)) scale(c) = 1.0;
  }
  const auto q = static_cast<Eigen::Index>(outputs / 3);
  model.output_offset = mean.replicate(q, 1);
  model.output_scale = scale.replicate(q, 1);
}

Eigen::VectorXd forward_pass(const NetworkModel& model, const Eigen::MatrixXd& measurement) {
  if (static_cast<std::size_t>(measurement.rows()) != model.input_rows ||
      static_cast<std::size_t>(measurement.cols()) != model.input_cols) {
    throw InvalidArgument("forward_pass: input is " + std::to_string(measurement.rows()) + "x" +
                          std::to_string(measurement.cols()) + ", model expects " +
                          std::to_string(model.input_rows) + "x" +
                          std::to_string(model.input_cols));
  }
  return forward_batch(model, flatten_input(measurement)).col(0);
}

Eigen::MatrixXd predict_locations(const NetworkModel& model, const Eigen::MatrixXd& measurement) {
  const Eigen::VectorXd out = forward_pass(model, measurement);
  if (out.size() % 3 != 0) throw InvalidArgument("predict_locations: output is not 3Q wide");
  Eigen::MatrixXd coords(out.size() / 3, 3);
  for (Eigen::Index q = 0; q < coords.rows(); ++q) coords.row(q) = out.segment(3 * q, 3).transpose();
  return coords;
}

double regularization_penalty(const NetworkModel& model, Regularization type) {
  double total = 0.0;
  auto add = [&](const Eigen::MatrixXd& w) {
    if (type == Regularization::tikhonov) total += w.squaredNorm();
    if (type == Regularization::l1) total += w.cwiseAbs().sum();
  };
  if (type == Regularization::none) return 0.0;
  if (model.conv) add(model.conv->kernels);
  for (const auto& layer : model.dense) add(layer.weights);
  return total;
}

namespace {

void add_penalty_gradient(const Eigen::MatrixXd& w, Regularization type, double weight,
                          Eigen::MatrixXd& grad) {
  if (weight == 0.0) return;
  if (type == Regularization::tikhonov) grad += (2.0 * weight) * w;
  if (type == Regularization::l1) grad += weight * w.cwiseSign();
}

}  // namespace

LossBreakdown loss_and_gradients(const NetworkModel& model, const Eigen::MatrixXd& inputs,
                                 const Eigen::MatrixXd& targets, Regularization reg_type,
                                 double reg_weight, Gradients& grads) {
  if (inputs.cols() < 1) throw InvalidArgument("loss_and_gradients: empty batch");
  if (targets.cols() != inputs.cols() ||
      static_cast<std::size_t>(targets.rows()) != model.output_dim()) {
    throw InvalidArgument("loss_and_gradients: target batch shape mismatch");
  }
  if (!(reg_weight >= 0.0)) throw InvalidArgument("loss_and_gradients: reg weight must be >= 0");

  ForwardCache cache;
  forward(model, inputs, cache);

  const double denom = static_cast<double>(targets.size());
  Eigen::MatrixXd delta = transform_outputs(model, cache.activations.back()) - targets;
  LossBreakdown out;
  out.data_loss = delta.squaredNorm() / denom;
  out.reg_term = reg_weight * regularization_penalty(model, reg_type);
  out.loss = out.data_loss + out.reg_term;
  delta *= 2.0 / denom;
  if (has_output_transform(model)) delta = model.output_scale.asDiagonal() * delta;

  grads.dense.resize(model.dense.size());
  for (std::size_t i = model.dense.size(); i-- > 0;) {
    const auto& layer = model.dense[i];
    activation_backward(layer.activation, cache.activations[i + 1], delta);
    auto& g = grads.dense[i];
    g.weights.noalias() = delta * cache.activations[i].transpose();
    g.biases = delta.rowwise().sum();
    add_penalty_gradient(layer.weights, reg_type, reg_weight, g.weights);
    if (i > 0 || model.conv) {
      Eigen::MatrixXd upstream;
      upstream.noalias() = layer.weights.transpose() * delta;
      delta = std::move(upstream);
    }
  }

  if (model.conv) {
    const auto& conv = *model.conv;
    const auto width = static_cast<Eigen::Index>(model.conv_output_width());
    const Eigen::Index filters = conv.kernels.rows();
    Eigen::MatrixXd dfeatures(filters, inputs.cols() * width);
    for (Eigen::Index b = 0; b < inputs.cols(); ++b)
      for (Eigen::Index l = 0; l < filters; ++l)
        for (Eigen::Index t = 0; t < width; ++t) dfeatures(l, b * width + t) = delta(l * width + t, b);
    if (!grads.conv) grads.conv.emplace();
    grads.conv->weights.noalias() = dfeatures * cache.patches.transpose();
    grads.conv->biases = dfeatures.rowwise().sum();
    add_penalty_gradient(conv.kernels, reg_type, reg_weight, grads.conv->weights);
  } else {
    grads.conv.reset();
  }
  return out;
}

void apply_sgd(NetworkModel& model, const Gradients& grads, double learning_rate) {
  if (grads.dense.size() != model.dense.size() || grads.conv.has_value() != model.conv.has_value()) {
    throw InvalidArgument("apply_sgd: gradient layout does not match the model");
  }
  if (model.conv) {
    model.conv->kernels.noalias() -= learning_rate * grads.conv->weights;
    model.conv->biases.noalias() -= learning_rate * grads.conv->biases;
  }
  for (std::size_t i = 0; i < model.dense.size(); ++i) {
    model.dense[i].weights.noalias() -= learning_rate * grads.dense[i].weights;
    model.dense[i].biases.noalias() -= learning_rate * grads.dense[i].biases;
  }
}

NetworkModel sgd_step(const NetworkModel& model, const Gradients& grads, double learning_rate) {
  NetworkModel next = model;
  apply_sgd(next, grads, learning_rate);
  return next;
}

Eigen::VectorXd flatten_parameters(const NetworkModel& model) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(model.parameter_count()));
  Eigen::Index k = 0;
  visit_parameters(model, [&](double v) { out(k++) = v; });
  return out;
}

void assign_parameters(NetworkModel& model, std::span<const double> values) {
  if (values.size() != model.parameter_count()) {
    throw InvalidArgument("assign_parameters: wrong parameter count");
  }
  std::size_t k = 0;
  visit_parameters(model, [&](double& v) { v = values[k++]; });
}

Eigen::VectorXd flatten_gradients(const Gradients& grads) {
  std::vector<double> out;
  if (grads.conv) {
    visit_row_major(grads.conv->weights, [&](double v) { out.push_back(v); });
    visit_row_major(grads.conv->biases, [&](double v) { out.push_back(v); });
  }
  for (const auto& g : grads.dense) {
    visit_row_major(g.weights, [&](double v) { out.push_back(v); });
    visit_row_major(g.biases, [&](double v) { out.push_back(v); });
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

std::vector<std::uint8_t> encode_model(const NetworkModel& model) {
  io::ByteWriter out;
  out.magic("MEGM");
  out.u32(kModelFormatVersion);
  out.u64(model.lead_field_fingerprint);
  out.u32(static_cast<std::uint32_t>(model.input_rows));
  out.u32(static_cast<std::uint32_t>(model.input_cols));
  out.u32(static_cast<std::uint32_t>(model.scaling));
  out.u32(model.conv ? static_cast<std::uint32_t>(model.conv->kernels.rows()) : 0);
  out.u32(model.conv ? static_cast<std::uint32_t>(model.conv->taps) : 0);
  out.u32(static_cast<std::uint32_t>(model.dense.size()));
  for (const auto& layer : model.dense) {
    out.u32(static_cast<std::uint32_t>(layer.weights.cols()));
    out.u32(static_cast<std::uint32_t>(layer.weights.rows()));
    out.u32(static_cast<std::uint32_t>(layer.activation));
  }
  out.u32(has_output_transform(model) ? 1 : 0);
  if (has_output_transform(model)) {
    out.f64s({model.output_offset.data(), static_cast<std::size_t>(model.output_offset.size())});
    out.f64s({model.output_scale.data(), static_cast<std::size_t>(model.output_scale.size())});
  }
  visit_parameters(model, [&](double v) { out.f64(v); });
  return out.bytes();
}

NetworkModel decode_model(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  in.expect_magic("MEGM");
  const auto version = in.u32();
  if (version != kModelFormatVersion) {
    throw FormatError("MEGM: unsupported version " + std::to_string(version));
  }
  NetworkModel model;
  model.lead_field_fingerprint = in.u64();
  model.input_rows = in.u32();
  model.input_cols = in.u32();
  const auto scaling = in.u32();
  if (scaling > 1) throw CorruptFileError("MEGM: unknown input scaling");
  model.scaling = static_cast<InputScaling>(scaling);
  const auto filters = in.u32();
  const auto taps = in.u32();
  const auto dense_count = in.u32();
  if (model.input_rows == 0 || model.input_cols == 0 || dense_count == 0) {
    throw CorruptFileError("MEGM: invalid architecture header");
  }

  std::size_t width = model.input_size();
  if (filters > 0) {
    if (taps == 0 || taps > model.input_cols) throw CorruptFileError("MEGM: invalid conv taps");
    ConvLayer conv;
    conv.taps = taps;
    conv.kernels.resize(filters, static_cast<Eigen::Index>(model.input_rows * taps));
    conv.biases.resize(filters);
    model.conv = std::move(conv);
    width = filters * (model.input_cols - taps + 1);
  }
  for (std::uint32_t i = 0; i < dense_count; ++i) {
    const auto in_dim = in.u32();
    const auto out_dim = in.u32();
    const auto activation = in.u32();
    if (in_dim != width || out_dim == 0 || activation > 2) {
      throw CorruptFileError("MEGM: dense layer " + std::to_string(i) + " does not chain");
    }
    DenseLayer layer;
    layer.weights.resize(out_dim, in_dim);
    layer.biases.resize(out_dim);
    layer.activation = static_cast<Activation>(activation);
    model.dense.push_back(std::move(layer));
    width = out_dim;
  }
  const auto transform = in.u32();
  if (transform > 1) throw CorruptFileError("MEGM: invalid output-transform flag");
  if (transform == 1) {
    model.output_offset.resize(static_cast<Eigen::Index>(width));
    model.output_scale.resize(static_cast<Eigen::Index>(width));
    in.f64s({model.output_offset.data(), width});
    in.f64s({model.output_scale.data(), width});
  }
  if (in.remaining() != 8 * model.parameter_count()) {
    throw CorruptFileError("MEGM: parameter block has " + std::to_string(in.remaining()) +
                           " bytes, expected " + std::to_string(8 * model.parameter_count()));
  }
  visit_parameters(model, [&](double& v) { v = in.f64(); });
  return model;
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_model(model));
}

NetworkModel load_model(const std::filesystem::path& path) {
  return decode_model(io::read_file(path));
}

std::string_view to_string(Activation f) {
  switch (f) {
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::relu:
      return "relu";
    case Activation::identity:
      return "identity";
  }
  return "unknown";
}

}  // namespace megloc

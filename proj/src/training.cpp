#include "megloc/training.hpp"

#include <cstdio>
#include <numeric>
#include <string>

#include "megloc/binary_io.hpp"
#include "megloc/errors.hpp"

namespace megloc {

namespace {

void pack(const Eigen::MatrixXd& input, const Eigen::MatrixXd& target, Eigen::Index column,
          Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets) {
  inputs.col(column) = flatten_input(input);
  targets.col(column) = flatten_target(target);
}

}  // namespace

DatasetSource::DatasetSource(const LabeledDataset& dataset, std::uint64_t seed)
    : dataset_(&dataset), rng_(seed), order_(dataset.size()) {
  if (dataset.size() == 0) throw InvalidArgument("DatasetSource: empty dataset");
  reshuffle();
}

void DatasetSource::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng_.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

void DatasetSource::next_batch(std::size_t size, Eigen::MatrixXd& inputs,
                               Eigen::MatrixXd& targets) {
  const auto& first_in = dataset_->inputs.front();
  const auto& first_out = dataset_->targets.front();
  inputs.resize(first_in.size(), static_cast<Eigen::Index>(size));
  targets.resize(first_out.size(), static_cast<Eigen::Index>(size));
  for (std::size_t b = 0; b < size; ++b) {
    if (cursor_ == order_.size()) reshuffle();
    const std::size_t k = order_[cursor_++];
    pack(dataset_->inputs[k], dataset_->targets[k], static_cast<Eigen::Index>(b), inputs, targets);
  }
}

void StreamSource::next_batch(std::size_t size, Eigen::MatrixXd& inputs,
                              Eigen::MatrixXd& targets) {
  auto batch = stream_->next_batch(size);
  if (batch.size() < size) throw InvalidArgument("StreamSource: stream exhausted");
  inputs.resize(batch.front().input.size(), static_cast<Eigen::Index>(size));
  targets.resize(batch.front().target.size(), static_cast<Eigen::Index>(size));
  for (std::size_t b = 0; b < size; ++b) {
    pack(batch[b].input, batch[b].target, static_cast<Eigen::Index>(b), inputs, targets);
  }
}

TrainResult train(NetworkModel model, ExampleSource& source, const TrainingConfig& config) {
  if (!(config.learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be > 0");
  if (config.batch_size < 1) throw InvalidArgument("train: batch size must be >= 1");
  if (config.log_every < 1) throw InvalidArgument("train: log interval must be >= 1");

  TrainResult result;
  Gradients grads;
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  for (std::size_t step = 0; step < config.steps; ++step) {
    source.next_batch(config.batch_size, inputs, targets);
    LossBreakdown loss;
    try {
      loss = loss_and_gradients(model, inputs, targets, config.reg_type, config.reg_weight, grads);
    } catch (const NumericError& e) {
      throw NumericError("train step " + std::to_string(step) + ": " + e.what());
    }
    if (step % config.log_every == 0) {
      result.history.push_back({step, loss.loss, loss.reg_term});
    }
    apply_sgd(model, grads, config.learning_rate);
  }
  result.model = std::move(model);
  return result;
}

void write_loss_history_csv(const std::vector<LossRecord>& history,
                            const std::filesystem::path& path) {
  std::string text = "step,loss,reg_term\n";
  char line[96];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%zu,%.12g,%.12g\n", r.step, r.loss, r.reg_term);
    text += line;
  }
  io::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace megloc

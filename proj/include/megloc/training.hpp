#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "megloc/network.hpp"
#include "megloc/rng.hpp"
#include "megloc/signal_gen.hpp"

namespace megloc {

struct TrainingConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t steps = 0;
  Regularization reg_type = Regularization::none;
  double reg_weight = 0.0;
  std::uint64_t seed = 0;
  /// Loss is recorded on steps divisible by this interval.
  std::size_t log_every = 100;
};

/// Supplies training batches in a deterministic order.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  /// Fills (M*N) x B inputs and (3Q) x B targets.
  virtual void next_batch(std::size_t size, Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets) = 0;
};

/// Cycles through a materialized dataset, reshuffling (seeded) every epoch.
class DatasetSource : public ExampleSource {
 public:
  DatasetSource(const LabeledDataset& dataset, std::uint64_t seed);
  void next_batch(std::size_t size, Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets) override;

 private:
  void reshuffle();

  const LabeledDataset* dataset_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Generates examples on the fly from a DatasetStream.
class StreamSource : public ExampleSource {
 public:
  explicit StreamSource(DatasetStream& stream) : stream_(&stream) {}
  void next_batch(std::size_t size, Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets) override;

 private:
  DatasetStream* stream_;
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double reg_term = 0.0;
};

struct TrainResult {
  NetworkModel model;
  std::vector<LossRecord> history;
};

/// Plain minibatch SGD for config.steps steps. The recorded loss at step s is
/// the loss of batch s before its update. Numeric failures are rethrown with
/// the step index.
TrainResult train(NetworkModel model, ExampleSource& source, const TrainingConfig& config);

/// CSV with header "step,loss,reg_term".
void write_loss_history_csv(const std::vector<LossRecord>& history,
                            const std::filesystem::path& path);

}  // namespace megloc

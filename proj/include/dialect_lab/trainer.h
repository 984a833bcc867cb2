#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dialect_lab/eval.h"
#include "dialect_lab/features.h"
#include "dialect_lab/models.h"
#include "dialect_lab/tensor.h"

namespace dialect_lab::trainer {

struct TrainConfig {
  std::size_t epochs_max = 30;
  std::size_t batch_size = 32;
  double lr = 0.001;
  std::size_t patience = 5;
  double val_fraction = 0.2;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  /// Seed of the train/validation split; shared by every seed and config so
  /// runs are compared on the same validation set.
  std::uint64_t split_seed = 1;
  /// An epoch improves when val_loss < best - min_delta.
  double min_delta = 1e-5;
  bool early_stopping = true;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  nlohmann::json to_json() const;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;

  /// One JSON object per line, one line per epoch.
  std::string to_jsonl() const;
};

/// Patience-based stopping on a loss stream.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta = 1e-5);

  /// Records the loss of the next epoch; returns true when this epoch set a
  /// new best.
  bool update(double loss);
  bool should_stop() const { return since_best_ >= patience_; }

  std::size_t epoch() const { return epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_;
};

/// Feature matrices with integer class labels.
struct LabeledSet {
  std::vector<features::FeatureMatrix> items;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return items.size(); }
};

struct Split {
  std::vector<std::size_t> train;  // indices into the dataset, ascending
  std::vector<std::size_t> val;
};

/// Per class, round(n * val_fraction) samples (at least 1, at most n - 1)
/// go to validation. Throws InvalidArgument when a class has < 2 samples.
Split stratified_split(std::span<const int> labels, double val_fraction,
                       std::uint64_t seed);

struct TrainResult {
  TrainHistory history;
  std::vector<float> best_weights;
};

/// Observer called after every epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the mean batch loss with per-epoch shuffling seeded
/// from (seed, epoch). Stops after `patience` epochs without improvement of
/// the validation loss (or at epochs_max) and leaves the model holding the
/// best epoch's weights. Throws TrainingError on a non-finite loss.
TrainResult train(models::Model& model, std::span<const nn::Tensor> train_x,
                  std::span<const int> train_y, std::span<const nn::Tensor> val_x,
                  std::span<const int> val_y, const TrainConfig& cfg,
                  std::uint64_t seed, const EpochCallback& on_epoch = {});

struct Evaluation {
  double mean_loss = 0.0;
  std::vector<int> predictions;
};
Evaluation evaluate(models::Model& model, std::span<const nn::Tensor> xs,
                    std::span<const int> ys);

/// Prepares the model inputs for `indices` of `data`.
std::vector<nn::Tensor> prepare_inputs(const LabeledSet& data,
                                       std::span<const std::size_t> indices,
                                       const models::ModelConfig& cfg,
                                       const models::Normalizer& norm);

struct SeedRun {
  models::ModelConfig config;
  std::uint64_t seed = 0;
  models::Model model;
  TrainHistory history;
  eval::EvalReport report;
};

struct ConfigResult {
  models::ModelConfig config;
  std::vector<eval::EvalReport> runs;
  eval::EvalReport mean;
};

/// Called once per finished seed run, e.g. to persist checkpoints.
using RunCallback = std::function<void(const SeedRun&)>;

/// Trains one model: fits the normalizer on the training split, trains,
/// and evaluates the best weights on the validation split.
SeedRun run_seed(const models::ModelConfig& cfg, const TrainConfig& tcfg,
                 const LabeledSet& data, const Split& split, std::uint64_t seed,
                 const EpochCallback& on_epoch = {});

/// Every config trained with every seed on one shared split; metrics are
/// averaged across seeds per config.
std::vector<ConfigResult> run_experiment(std::span<const models::ModelConfig> configs,
                                         const TrainConfig& tcfg, const LabeledSet& data,
                                         const RunCallback& on_run = {});

}  // namespace dialect_lab::trainer

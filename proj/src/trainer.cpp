#include "dialect_lab/trainer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dialect_lab/errors.h"
#include "dialect_lab/layers.h"
#include "dialect_lab/optim.h"
#include "dialect_lab/rng.h"

namespace dialect_lab::trainer {

void TrainConfig::validate() const {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw InvalidArgument("val_fraction must be in (0, 1), got " + std::to_string(val_fraction));
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (epochs_max < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be positive");
  if (seeds.empty()) throw InvalidArgument("at least one seed is required");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs_max},       {"batch_size", batch_size},
          {"lr", lr},                   {"patience", patience},
          {"val_fraction", val_fraction}, {"seeds", seeds},
          {"split_seed", split_seed},   {"min_delta", min_delta},
          {"early_stopping", early_stopping}};
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"train_accuracy", train_accuracy},
          {"val_loss", val_loss},
          {"val_accuracy", val_accuracy}};
}

std::string TrainHistory::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    auto j = e.to_json();
    j["best_epoch"] = best_epoch;
    out += j.dump() + "\n";
  }
  return out;
}

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta),
      best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
}

bool EarlyStopping::update(double loss) {
  ++epoch_;
  if (epoch_ == 1 || loss < best_ - min_delta_) {
    best_ = loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

Split stratified_split(std::span<const int> labels, double val_fraction,
                       std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw InvalidArgument("val_fraction must be in (0, 1)");
  if (labels.empty()) throw InvalidArgument("cannot split an empty dataset");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  Split split;
  for (int c = 0; c <= max_label; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(i);
    if (members.empty()) continue;
    if (members.size() < 2)
      throw InvalidArgument("class " + std::to_string(c) +
                            " has fewer than 2 samples; cannot split");
    Rng rng = make_rng(seed, "split", static_cast<std::uint64_t>(c));
    std::shuffle(members.begin(), members.end(), rng);
    auto n_val = static_cast<std::size_t>(
        std::lround(static_cast<double>(members.size()) * val_fraction));
    n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    split.val.insert(split.val.end(), members.begin(), members.begin() + static_cast<long>(n_val));
    split.train.insert(split.train.end(), members.begin() + static_cast<long>(n_val), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

namespace {

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_finite(double loss, std::size_t epoch, const char* where) {
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << "non-finite " << where << " loss at epoch " << epoch
       << "; check the learning rate and initialization";
    throw TrainingError(os.str());
  }
}

}  // namespace

Evaluation evaluate(models::Model& model, std::span<const nn::Tensor> xs,
                    std::span<const int> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("evaluate: inputs and labels differ in length");
  Evaluation ev;
  ev.predictions.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto loss = nn::softmax_cross_entropy(model.forward(xs[i]), static_cast<std::size_t>(ys[i]));
    ev.mean_loss += loss.loss;
    ev.predictions.push_back(static_cast<int>(argmax(loss.probs.values)));
  }
  if (!xs.empty()) ev.mean_loss /= static_cast<double>(xs.size());
  return ev;
}

TrainResult train(models::Model& model, std::span<const nn::Tensor> train_x,
                  std::span<const int> train_y, std::span<const nn::Tensor> val_x,
                  std::span<const int> val_y, const TrainConfig& cfg,
                  std::uint64_t seed, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_x.empty() || val_x.empty()) throw InvalidArgument("train: empty split");
  if (train_x.size() != train_y.size() || val_x.size() != val_y.size())
    throw InvalidArgument("train: inputs and labels differ in length");

  auto params = model.parameters();
  nn::zero_grad(params);
  nn::AdamState adam;
  adam.lr = cfg.lr;
  EarlyStopping stopper(cfg.patience, cfg.min_delta);

  TrainResult result;
  result.best_weights = model.export_weights();
  std::vector<std::size_t> order(train_x.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, "shuffle", epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      nn::zero_grad(params);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        auto loss = nn::softmax_cross_entropy(model.forward(train_x[i]),
                                              static_cast<std::size_t>(train_y[i]));
        check_finite(loss.loss, epoch, "training");
        loss_sum += loss.loss;
        if (static_cast<int>(argmax(loss.probs.values)) == train_y[i]) ++correct;
        for (double& g : loss.grad_logits.values) g *= scale;
        model.backward(loss.grad_logits);
      }
      nn::adam_step(params, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    Evaluation ev = evaluate(model, val_x, val_y);
    check_finite(ev.mean_loss, epoch, "validation");
    rec.val_loss = ev.mean_loss;
    std::size_t val_correct = 0;
    for (std::size_t i = 0; i < val_y.size(); ++i)
      if (ev.predictions[i] == val_y[i]) ++val_correct;
    rec.val_accuracy = static_cast<double>(val_correct) / static_cast<double>(val_y.size());
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (stopper.update(rec.val_loss)) result.best_weights = model.export_weights();
    result.history.best_epoch = stopper.best_epoch();
    result.history.stopped_epoch = epoch;
    if (cfg.early_stopping && stopper.should_stop()) break;
  }
  model.import_weights(result.best_weights);
  return result;
}

std::vector<nn::Tensor> prepare_inputs(const LabeledSet& data,
                                       std::span<const std::size_t> indices,
                                       const models::ModelConfig& cfg,
                                       const models::Normalizer& norm) {
  std::vector<nn::Tensor> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(models::prepare_input(data.items[i], cfg, norm));
  return out;
}

namespace {

std::vector<int> labels_at(const LabeledSet& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.labels[i]);
  return out;
}

void check_dataset(const LabeledSet& data) {
  if (data.items.empty()) throw InvalidArgument("dataset is empty");
  if (data.items.size() != data.labels.size())
    throw InvalidArgument("dataset items and labels differ in length");
  for (int y : data.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= data.class_names.size())
      throw InvalidArgument("label " + std::to_string(y) + " has no class name");
}

}  // namespace

SeedRun run_seed(const models::ModelConfig& cfg_in, const TrainConfig& tcfg,
                 const LabeledSet& data, const Split& split, std::uint64_t seed,
                 const EpochCallback& on_epoch) {
  check_dataset(data);
  const models::ModelConfig cfg = cfg_in.resolved();
  if (cfg.n_classes != data.class_names.size())
    throw InvalidArgument("model has " + std::to_string(cfg.n_classes) +
                          " classes but the dataset has " +
                          std::to_string(data.class_names.size()));
  for (const auto& fm : data.items)
    if (fm.kind != cfg.feature_kind)
      throw InvalidArgument("clip '" + fm.clip_id + "' holds " + features::to_string(fm.kind) +
                            " features but the model expects " +
                            features::to_string(cfg.feature_kind));

  std::vector<features::FeatureMatrix> train_fm;
  train_fm.reserve(split.train.size());
  for (std::size_t i : split.train) train_fm.push_back(data.items[i]);
  const auto norm = models::Normalizer::fit(train_fm, cfg.input_frames);
  train_fm.clear();

  const auto train_x = prepare_inputs(data, split.train, cfg, norm);
  const auto val_x = prepare_inputs(data, split.val, cfg, norm);
  const auto train_y = labels_at(data, split.train);
  const auto val_y = labels_at(data, split.val);

  SeedRun run{cfg, seed, models::build_model(cfg, seed), {}, {}};
  run.model.normalizer = norm;
  auto result = train(run.model, train_x, train_y, val_x, val_y, tcfg, seed, on_epoch);
  run.history = std::move(result.history);

  const Evaluation ev = evaluate(run.model, val_x, val_y);
  run.report = eval::metrics(eval::confusion(val_y, ev.predictions, data.class_names));
  run.report.config_id = cfg.id();
  run.report.display_name = cfg.display_name();
  run.report.seeds = {seed};
  return run;
}

std::vector<ConfigResult> run_experiment(std::span<const models::ModelConfig> configs,
                                         const TrainConfig& tcfg, const LabeledSet& data,
                                         const RunCallback& on_run) {
  tcfg.validate();
  check_dataset(data);
  if (configs.empty()) throw InvalidArgument("no model configurations given");
  const Split split = stratified_split(data.labels, tcfg.val_fraction, tcfg.split_seed);
  std::vector<ConfigResult> results;
  for (const auto& cfg : configs) {
    ConfigResult cr;
    cr.config = cfg.resolved();
    for (std::uint64_t seed : tcfg.seeds) {
      SeedRun run = run_seed(cfg, tcfg, data, split, seed);
      if (on_run) on_run(run);
      cr.runs.push_back(std::move(run.report));
    }
    cr.mean = eval::aggregate(cr.runs);
    results.push_back(std::move(cr));
  }
  return results;
}

}  // namespace dialect_lab::trainer

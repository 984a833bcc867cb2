#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace dialect_lab::eval {

/// counts[i][j] = number of samples with true class i predicted as j.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::int64_t>> counts;

  std::size_t classes() const { return class_names.size(); }
  std::int64_t total() const;
  std::int64_t trace() const;
};

/// Throws InvalidArgument on empty input, length mismatch or a class index
/// outside class_names.
ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> preds,
                          const std::vector<std::string>& class_names);

struct Averages {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

enum class AverageMode { kMacro, kWeighted };

std::string to_string(AverageMode mode);
AverageMode parse_average_mode(const std::string& text);

struct EvalReport {
  std::string config_id;  // "mfcc+cnn", ...
  std::string display_name;
  std::vector<std::uint64_t> seeds;
  double accuracy = 0.0;
  std::vector<double> precision;  // per class
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::int64_t> support;
  Averages macro;
  Averages weighted;
  ConfusionMatrix confusion;

  const Averages& averages(AverageMode mode) const {
    return mode == AverageMode::kMacro ? macro : weighted;
  }

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Precision = TP/(TP+FP), recall = TP/(TP+FN), F1 = 2PR/(P+R); a zero
/// denominator yields 0. Throws InvalidArgument if the matrix is empty.
EvalReport metrics(const ConfusionMatrix& cm);

/// Arithmetic mean of every scalar metric; confusion matrices are summed and
/// seed lists concatenated. Throws InvalidArgument if config ids or class
/// sets differ.
EvalReport aggregate(std::span<const EvalReport> reports);

/// Table with one row per configuration (in MFCC+CNN, MFCC+RNN, Wavelet+CNN,
/// Wavelet+RNN order) and Accuracy/Precision/Recall/F1 columns in percent
/// with one decimal.
std::string render_table(std::span<const EvalReport> reports,
                         AverageMode mode = AverageMode::kMacro);

/// Same rows as JSON: [{"model", "config", "average", "accuracy",
/// "precision", "recall", "f1"}], metric values as fractions.
nlohmann::json render_json(std::span<const EvalReport> reports,
                           AverageMode mode = AverageMode::kMacro);

/// Rank of a configuration id in the reporting order (unknown ids last).
int config_rank(const std::string& config_id);

}  // namespace dialect_lab::eval

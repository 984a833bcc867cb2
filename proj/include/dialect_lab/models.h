#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dialect_lab/features.h"
#include "dialect_lab/layers.h"
#include "dialect_lab/recurrent.h"
#include "dialect_lab/tensor.h"

namespace dialect_lab::models {

using features::FeatureKind;
using features::FeatureMatrix;

enum class Arch { kCnn, kRnn };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& text);

struct ModelConfig {
  FeatureKind feature_kind = FeatureKind::kMfcc;
  Arch arch = Arch::kCnn;
  nn::CellKind cell_kind = nn::CellKind::kLstm;
  std::size_t n_classes = 3;
  std::size_t feature_dim = 0;   // 0: 13 for mfcc, 512 for wavelet
  std::size_t input_frames = 0;  // 0: 300 for mfcc, 32 for wavelet
  std::array<std::size_t, 3> conv_channels{16, 32, 64};
  std::size_t dense_units = 128;
  std::size_t hidden_units = 64;

  /// Copy with the feature-kind dependent defaults filled in.
  ModelConfig resolved() const;
  void validate() const;

  /// "mfcc+cnn", "wavelet+rnn", ...
  std::string id() const;
  /// "MFCC + CNN", "Wavelet + RNN", ...
  std::string display_name() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// The four feature/architecture combinations in reporting order.
std::vector<ModelConfig> standard_configs(nn::CellKind cell = nn::CellKind::kLstm);

/// Per-feature-dimension standardization fitted on training data.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const { return mean.empty(); }
  /// Statistics over the first `frames` columns of each matrix (the frames
  /// a model actually sees). Values are rounded to float precision so that
  /// a checkpointed normalizer matches the in-memory one exactly.
  static Normalizer fit(std::span<const FeatureMatrix> train, std::size_t frames);
};

/// Kernel and pooling window of one conv stage of the CNN.
struct ConvStage {
  std::size_t kernel_h, kernel_w, pool_h, pool_w;
  std::vector<std::size_t> output_dims;  // after pooling
};

/// Three conv(3x3)+ReLU+maxpool(2x2) stages over a (1 x F x T) input. When
/// the feature axis is exhausted the kernel/pool height shrinks to what is
/// left (3x3 -> 1x3, 2x2 -> 1x2); the time axis must carry the full stack.
/// Throws InvalidArgument naming the minimum frame count otherwise.
std::vector<ConvStage> plan_cnn(std::size_t feature_dim, std::size_t frames,
                                const std::array<std::size_t, 3>& channels);

/// Smallest T for which plan_cnn succeeds.
std::size_t min_cnn_frames();

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  /// (1 x F x T) for the CNN, (T x F) for the RNN.
  std::vector<std::size_t> input_dims() const;

  nn::Tensor forward(const nn::Tensor& input);  // logits
  void backward(const nn::Tensor& grad_logits);

  std::vector<nn::Parameter*> parameters();
  std::size_t parameter_count() const;
  /// Layer-qualified parameter names and shapes, in blob order.
  nlohmann::json parameter_manifest() const;
  std::vector<std::string> describe() const;

  std::vector<float> export_weights() const;
  void import_weights(std::span<const float> weights);

  Normalizer normalizer;

 private:
  friend Model build_model(const ModelConfig& cfg, std::uint64_t seed);
  void initialize(std::uint64_t seed);

  ModelConfig cfg_;
  std::vector<std::unique_ptr<nn::Layer>> layers_;
  std::unique_ptr<nn::RecurrentLayer> rnn_;
  std::vector<std::string> param_prefix_;
};

/// Builds and initializes the network for `cfg`; a pure function of
/// (cfg, seed).
Model build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Pads with zeros or truncates along time to cfg.input_frames, applies the
/// normalizer (if any) to the real frames, and lays the result out for the
/// architecture.
nn::Tensor prepare_input(const FeatureMatrix& fm, const ModelConfig& cfg,
                         const Normalizer& norm);

/// Softmax class probabilities.
std::vector<double> predict(Model& model, const nn::Tensor& input);

/// Writes config, parameter layout, normalizer and `metadata` into the
/// header; weights and normalizer statistics go to the blob.
void save_model(const Model& model, const nlohmann::json& metadata,
                const std::filesystem::path& path);

struct LoadedModel {
  Model model;
  nlohmann::json header;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace dialect_lab::models

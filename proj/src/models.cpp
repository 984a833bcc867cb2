#include "dialect_lab/models.h"

#include <algorithm>
#include <cmath>

#include "dialect_lab/checkpoint.h"
#include "dialect_lab/errors.h"

namespace dialect_lab::models {

std::string to_string(Arch arch) { return arch == Arch::kCnn ? "cnn" : "rnn"; }

Arch parse_arch(const std::string& text) {
  if (text == "cnn") return Arch::kCnn;
  if (text == "rnn") return Arch::kRnn;
  throw InvalidArgument("unknown model '" + text + "' (expected cnn or rnn)");
}

ModelConfig ModelConfig::resolved() const {
  ModelConfig c = *this;
  const bool mfcc = feature_kind == FeatureKind::kMfcc;
  if (c.feature_dim == 0) c.feature_dim = mfcc ? 13 : features::kWaveletFrame;
  if (c.input_frames == 0) c.input_frames = mfcc ? 300 : 32;
  return c;
}

void ModelConfig::validate() const {
  if (n_classes < 2) throw InvalidArgument("model: n_classes must be >= 2");
  if (feature_dim == 0 || input_frames == 0)
    throw InvalidArgument("model: feature_dim and input_frames must be resolved");
  if (dense_units == 0 || hidden_units == 0)
    throw InvalidArgument("model: dense_units and hidden_units must be positive");
  for (std::size_t ch : conv_channels)
    if (ch == 0) throw InvalidArgument("model: conv channel counts must be positive");
  if (arch == Arch::kCnn) plan_cnn(feature_dim, input_frames, conv_channels);
}

std::string ModelConfig::id() const {
  return features::to_string(feature_kind) + "+" + to_string(arch);
}

std::string ModelConfig::display_name() const {
  std::string f = feature_kind == FeatureKind::kMfcc ? "MFCC" : "Wavelet";
  return f + " + " + (arch == Arch::kCnn ? "CNN" : "RNN");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"feature_kind", features::to_string(feature_kind)},
          {"arch", to_string(arch)},
          {"cell_kind", nn::to_string(cell_kind)},
          {"n_classes", n_classes},
          {"feature_dim", feature_dim},
          {"input_frames", input_frames},
          {"conv_channels", conv_channels},
          {"dense_units", dense_units},
          {"hidden_units", hidden_units}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.feature_kind = features::parse_feature_kind(j.at("feature_kind").get<std::string>());
  c.arch = parse_arch(j.at("arch").get<std::string>());
  c.cell_kind = nn::parse_cell_kind(j.value("cell_kind", std::string("lstm")));
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.input_frames = j.at("input_frames").get<std::size_t>();
  c.conv_channels = j.at("conv_channels").get<std::array<std::size_t, 3>>();
  c.dense_units = j.at("dense_units").get<std::size_t>();
  c.hidden_units = j.at("hidden_units").get<std::size_t>();
  return c;
}

std::vector<ModelConfig> standard_configs(nn::CellKind cell) {
  std::vector<ModelConfig> out;
  for (FeatureKind f : {FeatureKind::kMfcc, FeatureKind::kWavelet})
    for (Arch a : {Arch::kCnn, Arch::kRnn}) {
      ModelConfig c;
      c.feature_kind = f;
      c.arch = a;
      c.cell_kind = cell;
      out.push_back(c.resolved());
    }
  return out;
}

Normalizer Normalizer::fit(std::span<const FeatureMatrix> train,
                           std::size_t frames) {
  if (train.empty()) throw InvalidArgument("normalizer: no training data");
  const std::size_t dim = train.front().rows;
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  std::size_t count = 0;
  for (const auto& fm : train) {
    if (fm.rows != dim)
      throw ShapeError("normalizer: inconsistent feature dimension");
    const std::size_t used = std::min(frames, fm.cols);
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < used; ++c) sum[r] += fm.at(r, c);
    count += used;
  }
  if (count == 0) throw InvalidArgument("normalizer: no frames");
  Normalizer n;
  n.mean.resize(dim);
  n.stddev.resize(dim);
  for (std::size_t r = 0; r < dim; ++r) n.mean[r] = sum[r] / static_cast<double>(count);
  for (const auto& fm : train) {
    const std::size_t used = std::min(frames, fm.cols);
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < used; ++c) {
        double d = fm.at(r, c) - n.mean[r];
        sq[r] += d * d;
      }
  }
  for (std::size_t r = 0; r < dim; ++r) {
    double sd = std::sqrt(sq[r] / static_cast<double>(count));
    n.stddev[r] = sd > 1e-8 ? sd : 1.0;
  }
  for (std::size_t r = 0; r < dim; ++r) {
    n.mean[r] = static_cast<float>(n.mean[r]);
    n.stddev[r] = static_cast<float>(n.stddev[r]);
  }
  return n;
}

std::vector<ConvStage> plan_cnn(std::size_t feature_dim, std::size_t frames,
                                const std::array<std::size_t, 3>& channels) {
  auto fail = [&]() -> std::vector<ConvStage> {
    throw InvalidArgument("cnn: input (1 x " + std::to_string(feature_dim) +
                          " x " + std::to_string(frames) +
                          ") is too small for three conv/pool stages; need at "
                          "least " + std::to_string(min_cnn_frames()) +
                          " time frames");
  };
  if (feature_dim == 0) return fail();
  std::vector<ConvStage> stages;
  std::size_t h = feature_dim, w = frames;
  for (std::size_t s = 0; s < 3; ++s) {
    ConvStage st{};
    st.kernel_h = std::min<std::size_t>(3, h);
    st.kernel_w = 3;
    if (w < st.kernel_w) return fail();
    h = h - st.kernel_h + 1;
    w = w - st.kernel_w + 1;
    st.pool_h = std::min<std::size_t>(2, h);
    st.pool_w = 2;
    if (w < st.pool_w) return fail();
    h /= st.pool_h;
    w /= st.pool_w;
    st.output_dims = {channels[s], h, w};
    stages.push_back(st);
  }
  return stages;
}

std::size_t min_cnn_frames() {
  // Invert w -> floor((w - 2) / 2) three times from w = 1.
  std::size_t w = 1;
  for (int s = 0; s < 3; ++s) w = 2 * w + 2;
  return w;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg.resolved()) {
  cfg_.validate();
  if (cfg_.arch == Arch::kCnn) {
    auto stages = plan_cnn(cfg_.feature_dim, cfg_.input_frames, cfg_.conv_channels);
    std::size_t in_ch = 1;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto& st = stages[s];
      layers_.push_back(std::make_unique<nn::Conv2d>(
          in_ch, cfg_.conv_channels[s], st.kernel_h, st.kernel_w, nn::Activation::kRelu));
      param_prefix_.push_back("conv" + std::to_string(s + 1));
      layers_.push_back(std::make_unique<nn::MaxPool2d>(st.pool_h, st.pool_w));
      param_prefix_.push_back("pool" + std::to_string(s + 1));
      in_ch = cfg_.conv_channels[s];
    }
    layers_.push_back(std::make_unique<nn::Flatten>());
    param_prefix_.push_back("flatten");
    const std::size_t flat = nn::Tensor::count(stages.back().output_dims);
    layers_.push_back(
        std::make_unique<nn::Dense>(flat, cfg_.dense_units, nn::Activation::kRelu));
    param_prefix_.push_back("dense1");
    layers_.push_back(std::make_unique<nn::Dense>(cfg_.dense_units, cfg_.n_classes,
                                                  nn::Activation::kNone));
    param_prefix_.push_back("dense2");
  } else {
    rnn_ = std::make_unique<nn::RecurrentLayer>(cfg_.cell_kind, cfg_.feature_dim,
                                                cfg_.hidden_units, cfg_.n_classes);
  }
}

std::vector<std::size_t> Model::input_dims() const {
  if (cfg_.arch == Arch::kCnn) return {1, cfg_.feature_dim, cfg_.input_frames};
  return {cfg_.input_frames, cfg_.feature_dim};
}

void Model::initialize(std::uint64_t seed) {
  Rng rng = make_rng(seed, "init:" + cfg_.id());
  for (auto& layer : layers_) {
    if (auto* conv = dynamic_cast<nn::Conv2d*>(layer.get())) conv->initialize(rng);
    if (auto* dense = dynamic_cast<nn::Dense*>(layer.get())) dense->initialize(rng);
  }
  if (rnn_) rnn_->initialize(rng);
}

nn::Tensor Model::forward(const nn::Tensor& input) {
  if (input.dims != input_dims())
    throw ShapeError("model " + cfg_.id() + ": expected input " +
                     nn::shape_string(input_dims()) + ", got " +
                     nn::shape_string(input.dims));
  if (rnn_) return rnn_->forward(input);
  nn::Tensor x = input;
  for (auto& layer : layers_) x = layer->forward(x);
  return x;
}

void Model::backward(const nn::Tensor& grad_logits) {
  if (rnn_) {
    rnn_->backward(grad_logits);
    return;
  }
  nn::Tensor g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    // The input gradient of the first layer is never used.
    if (i == 0) {
      layers_[0]->backward(g);
      break;
    }
    g = layers_[i]->backward(g);
  }
}

std::vector<nn::Parameter*> Model::parameters() {
  if (rnn_) return rnn_->parameters();
  std::vector<nn::Parameter*> out;
  for (auto& layer : layers_)
    for (auto* p : layer->parameters()) out.push_back(p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<Model*>(this)->parameters()) n += p->tensor.size();
  return n;
}

nlohmann::json Model::parameter_manifest() const {
  auto* self = const_cast<Model*>(this);
  nlohmann::json out = nlohmann::json::array();
  if (rnn_) {
    for (auto* p : self->rnn_->parameters())
      out.push_back({{"name", "rnn." + p->name}, {"dims", p->tensor.dims}});
    return out;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto* p : self->layers_[i]->parameters())
      out.push_back({{"name", param_prefix_[i] + "." + p->name}, {"dims", p->tensor.dims}});
  return out;
}

std::vector<std::string> Model::describe() const {
  std::vector<std::string> out;
  if (rnn_) {
    out.push_back(nn::to_string(rnn_->kind()) + " " + std::to_string(rnn_->input_dim()) +
                  "->" + std::to_string(rnn_->hidden()) + " -> dense " +
                  std::to_string(rnn_->output_dim()));
  } else {
    for (const auto& layer : layers_) out.push_back(layer->describe());
  }
  out.push_back("softmax");
  return out;
}

std::vector<float> Model::export_weights() const {
  std::vector<float> out;
  out.reserve(parameter_count());
  for (auto* p : const_cast<Model*>(this)->parameters())
    for (double v : p->tensor.values) out.push_back(static_cast<float>(v));
  return out;
}

void Model::import_weights(std::span<const float> weights) {
  if (weights.size() != parameter_count())
    throw ShapeError("model " + cfg_.id() + ": expected " +
                     std::to_string(parameter_count()) + " weights, got " +
                     std::to_string(weights.size()));
  std::size_t i = 0;
  for (auto* p : parameters())
    for (double& v : p->tensor.values) v = weights[i++];
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model model(cfg);
  model.initialize(seed);
  return model;
}

nn::Tensor prepare_input(const FeatureMatrix& fm, const ModelConfig& cfg_in,
                         const Normalizer& norm) {
  const ModelConfig cfg = cfg_in.resolved();
  if (fm.rows == 0 || fm.cols == 0 || fm.data.empty())
    throw InvalidArgument("prepare_input: empty feature matrix '" + fm.clip_id + "'");
  if (fm.kind != cfg.feature_kind)
    throw InvalidArgument("prepare_input: model expects " +
                          features::to_string(cfg.feature_kind) + " features, got " +
                          features::to_string(fm.kind));
  if (fm.rows != cfg.feature_dim)
    throw ShapeError("prepare_input: expected feature dimension " +
                     std::to_string(cfg.feature_dim) + ", got " + std::to_string(fm.rows));
  if (!norm.empty() && norm.mean.size() != fm.rows)
    throw ShapeError("prepare_input: normalizer dimension mismatch");

  const std::size_t F = cfg.feature_dim, T = cfg.input_frames;
  const std::size_t used = std::min(T, fm.cols);
  auto value = [&](std::size_t r, std::size_t c) {
    double v = fm.at(r, c);
    return norm.empty() ? v : (v - norm.mean[r]) / norm.stddev[r];
  };
  if (cfg.arch == Arch::kCnn) {
    nn::Tensor t({1, F, T});
    for (std::size_t r = 0; r < F; ++r)
      for (std::size_t c = 0; c < used; ++c) t.values[r * T + c] = value(r, c);
    return t;
  }
  nn::Tensor t({T, F});
  for (std::size_t c = 0; c < used; ++c)
    for (std::size_t r = 0; r < F; ++r) t.values[c * F + r] = value(r, c);
  return t;
}

std::vector<double> predict(Model& model, const nn::Tensor& input) {
  return nn::softmax(model.forward(input)).values;
}

void save_model(const Model& model, const nlohmann::json& metadata,
                const std::filesystem::path& path) {
  nn::Checkpoint ckpt;
  ckpt.header["format"] = "dialect_lab.checkpoint";
  ckpt.header["version"] = 1;
  ckpt.header["architecture"] = model.config().id();
  ckpt.header["feature_kind"] = features::to_string(model.config().feature_kind);
  ckpt.header["model"] = model.config().to_json();
  ckpt.header["metadata"] = metadata;
  nlohmann::json layout = model.parameter_manifest();
  const std::size_t norm_dim = model.normalizer.mean.size();
  if (norm_dim > 0) {
    layout.push_back({{"name", "normalizer.mean"}, {"dims", {norm_dim}}});
    layout.push_back({{"name", "normalizer.stddev"}, {"dims", {norm_dim}}});
  }
  ckpt.header["layers"] = layout;
  ckpt.blob = model.export_weights();
  for (double v : model.normalizer.mean) ckpt.blob.push_back(static_cast<float>(v));
  for (double v : model.normalizer.stddev) ckpt.blob.push_back(static_cast<float>(v));
  nn::write_checkpoint(ckpt, path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  nn::Checkpoint ckpt = nn::read_checkpoint(path);
  if (!ckpt.header.contains("model"))
    throw FormatError(path.string() + ": checkpoint header lacks model config");
  Model model(ModelConfig::from_json(ckpt.header["model"]));
  const std::size_t n = model.parameter_count();
  if (ckpt.blob.size() < n)
    throw FormatError(path.string() + ": checkpoint blob is too short");
  model.import_weights(std::span<const float>(ckpt.blob.data(), n));
  const std::size_t rest = ckpt.blob.size() - n;
  if (rest % 2 != 0) throw FormatError(path.string() + ": bad normalizer block");
  const std::size_t dim = rest / 2;
  model.normalizer.mean.assign(ckpt.blob.begin() + static_cast<long>(n),
                               ckpt.blob.begin() + static_cast<long>(n + dim));
  model.normalizer.stddev.assign(ckpt.blob.begin() + static_cast<long>(n + dim),
                                 ckpt.blob.end());
  return {std::move(model), std::move(ckpt.header)};
}

}  // namespace dialect_lab::models

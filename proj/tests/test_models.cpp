#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "dialect_lab/errors.h"
#include "dialect_lab/models.h"
#include "test_util.h"

using namespace dialect_lab;
using namespace dialect_lab::models;
using features::FeatureMatrix;

namespace {

FeatureMatrix random_features(FeatureKind kind, std::size_t rows, std::size_t cols, std::uint64_t seed,
                              double mean = 0.0, double sd = 1.0) {
  FeatureMatrix fm;
  fm.kind = kind;
  fm.rows = rows;
  fm.cols = cols;
  fm.clip_id = "r" + std::to_string(seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(mean, sd);
  fm.data.resize(rows * cols);
  for (double& v : fm.data) v = n(rng);
  return fm;
}

ModelConfig config(FeatureKind kind, Arch arch, nn::CellKind cell = nn::CellKind::kLstm) {
  ModelConfig c;
  c.feature_kind = kind;
  c.arch = arch;
  c.cell_kind = cell;
  return c;
}

// Independent shape walk: valid 3x3 conv (height clipped to what is left),
// then 2x2 pooling (height clipped likewise), three times.
std::size_t cnn_parameter_count(std::size_t F, std::size_t T, std::size_t classes) {
  const std::size_t channels[3] = {16, 32, 64};
  std::size_t h = F, w = T, in = 1, total = 0;
  for (std::size_t out : channels) {
    const std::size_t kh = std::min<std::size_t>(3, h);
    total += out * in * kh * 3 + out;
    h = h - kh + 1;
    w = w - 2;
    h /= std::min<std::size_t>(2, h);
    w /= 2;
    in = out;
  }
  const std::size_t flat = in * h * w;
  return total + flat * 128 + 128 + 128 * classes + classes;
}

std::size_t rnn_parameter_count(std::size_t F, std::size_t hidden, std::size_t classes, bool lstm) {
  const std::size_t g = lstm ? 4 * hidden : hidden;
  return g * F + g * hidden + g + classes * hidden + classes;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("configs resolve paper defaults") {
    const auto m = config(FeatureKind::kMfcc, Arch::kCnn).resolved();
    CHECK(m.feature_dim == 13);
    CHECK(m.input_frames == 300);
    const auto w = config(FeatureKind::kWavelet, Arch::kRnn).resolved();
    CHECK(w.feature_dim == 512);
    CHECK(w.input_frames == 32);
    CHECK(w.hidden_units == 64);
    CHECK(m.dense_units == 128);
    CHECK(m.id() == "mfcc+cnn");
    CHECK(w.display_name() == "Wavelet + RNN");

    const auto all = standard_configs();
    REQUIRE(all.size() == 4);
    CHECK(all[0].id() == "mfcc+cnn");
    CHECK(all[1].id() == "mfcc+rnn");
    CHECK(all[2].id() == "wavelet+cnn");
    CHECK(all[3].id() == "wavelet+rnn");

    auto bad = m;
    bad.n_classes = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    const auto back = ModelConfig::from_json(w.to_json());
    CHECK(back.id() == w.id());
    CHECK(back.cell_kind == w.cell_kind);
    CHECK(back.input_frames == 32);
  }

  TEST_CASE("parameter counts match the closed form") {
    CHECK(build_model(config(FeatureKind::kMfcc, Arch::kCnn), 1).parameter_count() ==
          cnn_parameter_count(13, 300, 3));
    CHECK(build_model(config(FeatureKind::kWavelet, Arch::kCnn), 1).parameter_count() ==
          cnn_parameter_count(512, 32, 3));
    CHECK(build_model(config(FeatureKind::kMfcc, Arch::kRnn), 1).parameter_count() ==
          rnn_parameter_count(13, 64, 3, true));
    CHECK(build_model(config(FeatureKind::kWavelet, Arch::kRnn, nn::CellKind::kSimple), 1).parameter_count() ==
          rnn_parameter_count(512, 64, 3, false));

    auto m = build_model(config(FeatureKind::kMfcc, Arch::kCnn), 1);
    std::size_t sum = 0;
    for (auto* p : m.parameters()) sum += p->tensor.size();
    CHECK(sum == m.parameter_count());
    std::size_t manifest = 0;
    for (const auto& e : m.parameter_manifest()) {
      std::size_t n = 1;
      for (std::size_t d : e["dims"].get<std::vector<std::size_t>>()) n *= d;
      manifest += n;
    }
    CHECK(manifest == m.parameter_count());
  }

  TEST_CASE("cnn plan and minimum frames") {
    const auto stages = plan_cnn(13, 300, {16, 32, 64});
    REQUIRE(stages.size() == 3);
    CHECK(stages[0].output_dims == std::vector<std::size_t>{16, 5, 149});
    CHECK(stages[1].output_dims == std::vector<std::size_t>{32, 1, 73});
    CHECK(stages[2].kernel_h == 1);
    CHECK(stages[2].output_dims == std::vector<std::size_t>{64, 1, 35});
    CHECK(min_cnn_frames() == 22);
    CHECK_NOTHROW(plan_cnn(13, 22, {16, 32, 64}));
    CHECK_THROWS_AS(plan_cnn(13, 21, {16, 32, 64}), InvalidArgument);
    auto small = config(FeatureKind::kMfcc, Arch::kCnn);
    small.input_frames = 10;
    try {
      build_model(small, 1);
      FAIL("expected an error");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("22") != std::string::npos);
    }
  }

  TEST_CASE("build_model is a pure function of config and seed") {
    for (const auto& cfg : standard_configs()) {
      CAPTURE(cfg.id());
      const auto a = build_model(cfg, 7).export_weights();
      const auto b = build_model(cfg, 7).export_weights();
      const auto c = build_model(cfg, 8).export_weights();
      CHECK(a == b);
      CHECK(a != c);
    }
  }

  TEST_CASE("prepare_input pads, truncates and lays out") {
    auto cfg = config(FeatureKind::kMfcc, Arch::kCnn);
    cfg.input_frames = 40;
    const auto exact = random_features(FeatureKind::kMfcc, 13, 40, 1);
    const auto t = prepare_input(exact, cfg, {});
    CHECK(t.dims == std::vector<std::size_t>{1, 13, 40});
    CHECK(t.values == exact.data);

    const auto longer = random_features(FeatureKind::kMfcc, 13, 80, 2);
    const auto cut = prepare_input(longer, cfg, {});
    for (std::size_t r = 0; r < 13; ++r)
      for (std::size_t c = 0; c < 40; ++c) CHECK(cut.at(0, r, c) == longer.at(r, c));

    const auto shorter = random_features(FeatureKind::kMfcc, 13, 25, 3);
    const auto padded = prepare_input(shorter, cfg, {});
    for (std::size_t r = 0; r < 13; ++r) {
      CHECK(padded.at(0, r, 24) == shorter.at(r, 24));
      for (std::size_t c = 25; c < 40; ++c) CHECK(padded.at(0, r, c) == 0.0);
    }

    auto rcfg = config(FeatureKind::kMfcc, Arch::kRnn);
    rcfg.input_frames = 40;
    const auto seq = prepare_input(exact, rcfg, {});
    CHECK(seq.dims == std::vector<std::size_t>{40, 13});
    CHECK(seq.values[5 * 13 + 2] == exact.at(2, 5));

    CHECK_THROWS_AS(prepare_input(FeatureMatrix{}, cfg, {}), InvalidArgument);
    CHECK_THROWS_AS(prepare_input(random_features(FeatureKind::kWavelet, 13, 40, 4), cfg, {}), InvalidArgument);
    CHECK_THROWS_AS(prepare_input(random_features(FeatureKind::kMfcc, 12, 40, 4), cfg, {}), ShapeError);
  }

  TEST_CASE("standardization uses train statistics") {
    std::vector<FeatureMatrix> train;
    for (std::uint64_t s = 0; s < 12; ++s) train.push_back(random_features(FeatureKind::kMfcc, 13, 50, s, 3.0, 2.0));
    auto cfg = config(FeatureKind::kMfcc, Arch::kRnn);
    cfg.input_frames = 50;
    const auto norm = Normalizer::fit(train, 50);
    std::vector<double> sum(13, 0.0), sq(13, 0.0);
    for (const auto& fm : train) {
      const auto t = prepare_input(fm, cfg, norm);
      for (std::size_t c = 0; c < 50; ++c)
        for (std::size_t r = 0; r < 13; ++r) {
          sum[r] += t.values[c * 13 + r];
          sq[r] += t.values[c * 13 + r] * t.values[c * 13 + r];
        }
    }
    const double n = 12.0 * 50.0;
    for (std::size_t r = 0; r < 13; ++r) {
      const double mean = sum[r] / n;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(std::sqrt(sq[r] / n - mean * mean) - 1.0) < 1e-6);
    }

    // Only the frames the model sees contribute.
    std::vector<FeatureMatrix> skewed;
    for (const auto& src : train) {
      FeatureMatrix fm = src;
      fm.cols = 60;
      fm.data.assign(13 * 60, 1e6);
      for (std::size_t r = 0; r < 13; ++r)
        for (std::size_t c = 0; c < 50; ++c) fm.data[r * 60 + c] = src.at(r, c);
      skewed.push_back(fm);
    }
    CHECK(Normalizer::fit(skewed, 50).mean == norm.mean);

    std::vector<FeatureMatrix> flat{random_features(FeatureKind::kMfcc, 2, 10, 1, 0.0, 0.0)};
    CHECK(Normalizer::fit(flat, 10).stddev == std::vector<double>{1.0, 1.0});
  }

  TEST_CASE("predictions are distributions") {
    for (const auto& base : standard_configs()) {
      auto cfg = base;
      if (cfg.feature_kind == FeatureKind::kWavelet) cfg.input_frames = 24;
      auto model = build_model(cfg, 3);
      const auto r = cfg.resolved();
      const auto fm = random_features(r.feature_kind, r.feature_dim, r.input_frames, 5);
      const auto p = predict(model, prepare_input(fm, cfg, {}));
      REQUIRE(p.size() == 3);
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
      for (double v : p) CHECK(v > 0.0);

      auto params = model.parameters();
      for (auto it = params.end() - 2; it != params.end(); ++it)
        for (double& v : (*it)->tensor.values) v = 0.0;
      for (double v : predict(model, prepare_input(fm, cfg, {}))) CHECK(v == doctest::Approx(1.0 / 3.0));
    }
    auto model = build_model(config(FeatureKind::kMfcc, Arch::kCnn), 1);
    CHECK_THROWS_AS(model.forward(nn::Tensor({1, 13, 299})), ShapeError);
  }

  TEST_CASE("checkpoint save and load reproduce predictions") {
    const auto dir = test_util::temp_dir("models_ckpt");
    for (const auto& base : standard_configs()) {
      auto cfg = base;
      if (cfg.feature_kind == FeatureKind::kWavelet) cfg.input_frames = 24;
      CAPTURE(cfg.id());
      auto model = build_model(cfg, 11);
      const auto r = cfg.resolved();
      std::vector<FeatureMatrix> train{random_features(r.feature_kind, r.feature_dim, r.input_frames, 1, 0.5, 2.0),
                                       random_features(r.feature_kind, r.feature_dim, r.input_frames, 2, 0.5, 2.0)};
      model.normalizer = Normalizer::fit(train, r.input_frames);
      const auto path = dir / (cfg.id() + ".ckpt");
      save_model(model, {{"seed", 11}}, path);
      auto loaded = load_model(path);
      CHECK(loaded.header["metadata"]["seed"] == 11);
      CHECK(loaded.header["architecture"] == cfg.id());
      CHECK(loaded.model.export_weights() == model.export_weights());
      CHECK(loaded.model.normalizer.mean == model.normalizer.mean);
      CHECK(loaded.model.normalizer.stddev == model.normalizer.stddev);
      const auto probe = random_features(r.feature_kind, r.feature_dim, r.input_frames, 9);
      const auto a = predict(model, prepare_input(probe, cfg, model.normalizer));
      const auto b = predict(loaded.model, prepare_input(probe, cfg, loaded.model.normalizer));
      for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-7);
    }
    CHECK_THROWS_AS(load_model(dir / "absent.ckpt"), IoError);
  }

  TEST_CASE("weight import validates its length") {
    auto model = build_model(config(FeatureKind::kMfcc, Arch::kRnn), 1);
    auto w = model.export_weights();
    w.pop_back();
    CHECK_THROWS(model.import_weights(w));
  }
}

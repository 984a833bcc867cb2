#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "dialect_lab/errors.h"
#include "dialect_lab/trainer.h"

using namespace dialect_lab;
using namespace dialect_lab::trainer;
using features::FeatureKind;
using features::FeatureMatrix;

namespace {

// Three classes whose features differ by a per-class offset pattern.
LabeledSet toy_set(std::size_t per_class, std::size_t rows, std::size_t cols, double separation,
                   std::uint64_t seed) {
  LabeledSet set;
  set.class_names = {"a", "b", "c"};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      FeatureMatrix fm;
      fm.kind = FeatureKind::kMfcc;
      fm.rows = rows;
      fm.cols = cols;
      fm.clip_id = set.class_names[static_cast<std::size_t>(k)] + std::to_string(i);
      fm.data.resize(rows * cols);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          fm.data[r * cols + c] = n(rng) + (r % 3 == static_cast<std::size_t>(k) ? separation : 0.0);
      set.items.push_back(fm);
      set.labels.push_back(k);
    }
  return set;
}

models::ModelConfig small_config(models::Arch arch, std::size_t frames) {
  models::ModelConfig cfg;
  cfg.arch = arch;
  cfg.cell_kind = nn::CellKind::kSimple;
  cfg.feature_dim = 13;
  cfg.input_frames = frames;
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("config validation and serialization") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.epochs_max == 30);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.lr == 0.001);
    CHECK(cfg.patience == 5);
    CHECK(cfg.val_fraction == 0.2);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
    const auto j = cfg.to_json();
    CHECK(j["epochs"] == 30);
    CHECK(j["seeds"].size() == 3);
    for (double f : {0.0, 1.0, -0.1}) {
      auto bad = cfg;
      bad.val_fraction = f;
      CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    }
    auto bad = cfg;
    bad.patience = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.seeds.clear();
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  }

  TEST_CASE("early stopping on a scripted loss sequence") {
    EarlyStopping es(5);
    const double losses[] = {1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99};
    std::size_t stopped = 0;
    for (double l : losses) {
      es.update(l);
      if (es.should_stop()) {
        stopped = es.epoch();
        break;
      }
    }
    CHECK(stopped == 7);
    CHECK(es.best_epoch() == 2);
    CHECK(es.best_loss() == 0.9);

    EarlyStopping falling(5);
    for (int e = 0; e < 30; ++e) {
      CHECK(falling.update(1.0 - 0.01 * e));
      CHECK_FALSE(falling.should_stop());
    }
    CHECK(falling.best_epoch() == 30);

    // Improvements smaller than the tolerance do not reset patience.
    EarlyStopping tiny(2, 1e-5);
    CHECK(tiny.update(1.0));
    CHECK_FALSE(tiny.update(1.0 - 5e-6));
    CHECK_FALSE(tiny.update(1.0 - 9e-6));
    CHECK(tiny.should_stop());
    CHECK(tiny.best_epoch() == 1);

    EarlyStopping repeated(3);
    CHECK(repeated.update(2.0));
    CHECK_FALSE(repeated.update(2.0));
  }

  TEST_CASE("stratified split") {
    std::vector<int> labels;
    for (int k = 0; k < 3; ++k) labels.insert(labels.end(), 100, k);
    const auto s = stratified_split(labels, 0.2, 1);
    CHECK(s.val.size() == 60);
    CHECK(s.train.size() == 240);
    for (int k = 0; k < 3; ++k)
      CHECK(std::count_if(s.val.begin(), s.val.end(), [&](std::size_t i) { return labels[i] == k; }) == 20);
    const auto again = stratified_split(labels, 0.2, 1);
    CHECK(again.val == s.val);
    CHECK(stratified_split(labels, 0.2, 2).val != s.val);
    CHECK(std::is_sorted(s.val.begin(), s.val.end()));
    CHECK(std::is_sorted(s.train.begin(), s.train.end()));

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> ys;
      std::vector<std::size_t> counts(4, 0);
      const std::size_t n = 20 + rng() % 60;
      for (std::size_t i = 0; i < n; ++i) ys.push_back(static_cast<int>(rng() % 4));
      for (int y : ys) ++counts[static_cast<std::size_t>(y)];
      if (*std::min_element(counts.begin(), counts.end()) < 2) continue;
      const double frac = 0.1 + 0.05 * (trial % 8);
      const auto sp = stratified_split(ys, frac, static_cast<std::uint64_t>(trial));
      std::set<std::size_t> all(sp.train.begin(), sp.train.end());
      for (std::size_t i : sp.val) CHECK(all.insert(i).second);
      CHECK(all.size() == n);
      for (int k = 0; k < 4; ++k) {
        const double got = static_cast<double>(
            std::count_if(sp.val.begin(), sp.val.end(), [&](std::size_t i) { return ys[i] == k; }));
        CHECK(std::abs(got - frac * static_cast<double>(counts[static_cast<std::size_t>(k)])) <= 1.0);
      }
    }
    const std::vector<int> lonely{0, 0, 1};
    CHECK_THROWS_AS(stratified_split(lonely, 0.2, 1), InvalidArgument);
  }

  TEST_CASE("a single batch is memorized") {
    // 32 samples with arbitrary labels, one batch per epoch, no early stop.
    auto data = toy_set(11, 13, 24, 0.0, 5);
    data.items.resize(32);
    data.labels.resize(32);
    auto cfg = small_config(models::Arch::kCnn, 24);
    auto model = models::build_model(cfg, 1);
    std::vector<std::size_t> all(32);
    for (std::size_t i = 0; i < 32; ++i) all[i] = i;
    const auto xs = prepare_inputs(data, all, cfg, {});
    TrainConfig tcfg;
    tcfg.epochs_max = 100;
    tcfg.early_stopping = false;
    const auto result = train(model, xs, data.labels, xs, data.labels, tcfg, 1);
    REQUIRE(result.history.epochs.size() == 100);
    CHECK(result.history.epochs.back().train_loss < 0.01);
    CHECK(evaluate(model, xs, data.labels).mean_loss < 0.01);
  }

  TEST_CASE("training history invariants and restored weights") {
    const auto data = toy_set(20, 13, 30, 0.8, 9);
    const auto split = stratified_split(data.labels, 0.2, 1);
    auto cfg = small_config(models::Arch::kRnn, 30);
    TrainConfig tcfg;
    tcfg.epochs_max = 15;
    tcfg.patience = 2;
    tcfg.lr = 0.01;
    std::size_t calls = 0;
    auto run = run_seed(cfg, tcfg, data, split, 4, [&](const EpochRecord&) { ++calls; });
    const auto& h = run.history;
    CHECK(calls == h.epochs.size());
    CHECK(h.stopped_epoch == h.epochs.size());
    CHECK(h.best_epoch <= h.stopped_epoch);
    CHECK((h.stopped_epoch >= tcfg.patience + 1 || h.stopped_epoch == tcfg.epochs_max));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : h.epochs) best = std::min(best, e.val_loss);
    CHECK(h.epochs[h.best_epoch - 1].val_loss == best);

    // The returned model carries the best epoch's weights.
    auto& model = run.model;
    const auto val_x = prepare_inputs(data, split.val, cfg, model.normalizer);
    std::vector<int> val_y;
    for (std::size_t i : split.val) val_y.push_back(data.labels[i]);
    const auto ev = evaluate(model, val_x, val_y);
    CHECK(ev.mean_loss == doctest::Approx(best).epsilon(1e-5));
    CHECK(run.report.accuracy == doctest::Approx(h.epochs[h.best_epoch - 1].val_accuracy).epsilon(1e-5));

    const auto lines = h.to_jsonl();
    CHECK(std::count(lines.begin(), lines.end(), '\n') == static_cast<long>(h.epochs.size()));
    const auto first = nlohmann::json::parse(lines.substr(0, lines.find('\n')));
    CHECK(first["epoch"] == 1);
    CHECK(first.contains("val_loss"));
  }

  TEST_CASE("non-finite loss aborts") {
    auto data = toy_set(4, 13, 24, 0.0, 1);
    auto cfg = small_config(models::Arch::kCnn, 24);
    std::vector<std::size_t> idx{0, 4, 8};
    auto xs = prepare_inputs(data, idx, cfg, {});
    xs[1].values[7] = std::numeric_limits<double>::quiet_NaN();
    const std::vector<int> ys{0, 1, 2};
    auto model = models::build_model(cfg, 1);
    CHECK_THROWS_AS(train(model, xs, ys, xs, ys, TrainConfig{}, 1), TrainingError);
  }

  TEST_CASE("duplicated seeds give identical runs and the mean of one run is that run") {
    const auto data = toy_set(10, 13, 20, 1.0, 2);
    const std::vector<models::ModelConfig> configs{small_config(models::Arch::kRnn, 20)};
    TrainConfig tcfg;
    tcfg.epochs_max = 4;
    tcfg.seeds = {1, 1};
    std::vector<std::vector<float>> weights;
    const auto res = run_experiment(configs, tcfg, data, [&](const SeedRun& r) { weights.push_back(r.model.export_weights()); });
    REQUIRE(res.size() == 1);
    REQUIRE(res[0].runs.size() == 2);
    REQUIRE(weights.size() == 2);
    CHECK(weights[0] == weights[1]);
    CHECK(res[0].runs[0].to_json().dump() == res[0].runs[1].to_json().dump());
    CHECK(res[0].mean.accuracy == res[0].runs[0].accuracy);

    tcfg.seeds = {2};
    const auto single = run_experiment(configs, tcfg, data);
    CHECK(single[0].mean.accuracy == single[0].runs[0].accuracy);
    CHECK(single[0].mean.macro.f1 == single[0].runs[0].macro.f1);

    tcfg.seeds = {1, 2, 3};
    const auto three = run_experiment(configs, tcfg, data);
    REQUIRE(three[0].runs.size() == 3);
    double acc = 0.0;
    for (const auto& r : three[0].runs) acc += r.accuracy;
    CHECK(three[0].mean.accuracy == doctest::Approx(acc / 3.0));
    CHECK(three[0].mean.seeds == std::vector<std::uint64_t>{1, 2, 3});
  }
}

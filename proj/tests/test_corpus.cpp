#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dialect_lab/audio.h"
#include "dialect_lab/corpus.h"
#include "dialect_lab/errors.h"
#include "dialect_lab/features.h"
#include "test_util.h"

using namespace dialect_lab;
using namespace dialect_lab::corpus;
namespace fs = std::filesystem;

namespace {

void write_tone(const fs::path& path, double seconds = 0.5) {
  audio::AudioClip c;
  c.samples = test_util::sine(300.0, 16000.0, static_cast<std::size_t>(seconds * 16000.0));
  fs::create_directories(path.parent_path());
  audio::write_wav(c, path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

// Mean power in [lo_hz, hi_hz] over non-overlapping 512-sample frames,
// evaluated with a direct DFT.
double band_power(const std::vector<double>& x, double lo_hz, double hi_hz) {
  const std::size_t n = 512;
  const std::size_t lo = static_cast<std::size_t>(std::ceil(lo_hz * n / 16000.0));
  const std::size_t hi = static_cast<std::size_t>(std::floor(hi_hz * n / 16000.0));
  double total = 0.0;
  std::size_t frames = 0;
  for (std::size_t start = 0; start + n <= x.size() && frames < 12; start += 4 * n, ++frames) {
    const std::vector<double> frame(x.begin() + static_cast<long>(start), x.begin() + static_cast<long>(start + n));
    for (std::size_t k = lo; k <= hi; ++k) total += std::pow(test_util::dft_magnitude(frame, n, k), 2);
  }
  return total / static_cast<double>(frames * (hi - lo + 1));
}

std::vector<double> mean_log_mel(const audio::AudioClip& clip) {
  features::MfccConfig cfg;
  const auto fb = features::mel_filterbank(cfg, 16000.0);
  const auto spec = features::stft(clip, cfg);
  std::vector<double> mean(fb.n_mels, 0.0);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    std::vector<double> power(spec.bins);
    for (std::size_t k = 0; k < spec.bins; ++k) power[k] = std::norm(spec.at(k, f));
    const auto s = fb.apply(power);
    for (std::size_t m = 0; m < fb.n_mels; ++m) mean[m] += std::log(std::max(s[m], 1e-10));
  }
  for (double& v : mean) v /= static_cast<double>(spec.frames);
  return mean;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("country mapping") {
    CHECK(map_country_to_dialect("Egypt") == Dialect::kEgyptian);
    for (const char* c : {"Jordan", "Palestine", "Lebanon", "Syria"}) CHECK(map_country_to_dialect(c) == Dialect::kLevantine);
    for (const char* c : {"Saudi Arabia", "UAE", "United Arab Emirates", "Qatar", "Kuwait"})
      CHECK(map_country_to_dialect(c) == Dialect::kGulf);
    CHECK(map_country_to_dialect("jordan") == Dialect::kLevantine);
    CHECK(map_country_to_dialect("  QATAR ") == Dialect::kGulf);
    for (const char* c : {"Morocco", "Unknown", "", "Iraq", "Egyptian"}) CHECK_FALSE(map_country_to_dialect(c).has_value());

    CHECK(class_names() == std::vector<std::string>{"Egyptian", "Levantine", "Gulf"});
    CHECK(parse_dialect("gulf") == Dialect::kGulf);
    CHECK_FALSE(parse_dialect("maghrebi").has_value());
  }

  TEST_CASE("manifest loading, derivation and exclusion") {
    const auto dir = test_util::temp_dir("manifest");
    write_tone(dir / "a.wav");
    write_tone(dir / "b.wav", 0.25);
    write_tone(dir / "c.wav");
    write_tone(dir / "d.wav");
    write_text(dir / "manifest.tsv",
               "clip_id\tpath\tcountry\n"
               "a\ta.wav\tEgypt\n"
               "b\tb.wav\tJordan\n"
               "c\tc.wav\tQatar\n"
               "d\td.wav\tUnknown\n");
    const auto ds = load_manifest(dir / "manifest.tsv");
    REQUIRE(ds.entries.size() == 3);
    CHECK(ds.excluded == 1);
    CHECK(ds.entries[0].dialect == Dialect::kEgyptian);
    CHECK(ds.entries[1].dialect == Dialect::kLevantine);
    CHECK(ds.entries[2].dialect == Dialect::kGulf);
    CHECK(ds.entries[1].duration_s == doctest::Approx(0.25));
    CHECK(ds.class_counts() == std::array<std::size_t, 3>{1, 1, 1});
    CHECK(ds.balance_summary() == "Egyptian=1 Levantine=1 Gulf=1");
    CHECK(ds.resolve(ds.entries[0]) == dir / "a.wav");

    // Round trip through the six-column writer; explicit dialect wins.
    auto entries = ds.entries;
    entries[0].split = "val";
    write_manifest(entries, dir / "again.tsv");
    const auto back = load_manifest(dir / "again.tsv");
    REQUIRE(back.entries.size() == 3);
    CHECK(back.entries[0].split == "val");
    CHECK(back.entries[2].country == "Qatar");

    write_text(dir / "override.tsv",
               "clip_id\tpath\tcountry\tdialect\n"
               "a\ta.wav\tEgypt\tGulf\n"
               "b\tb.wav\tMorocco\tLevantine\n"
               "c\tc.wav\t\tEgyptian\n");
    const auto ov = load_manifest(dir / "override.tsv");
    CHECK(ov.entries[0].dialect == Dialect::kGulf);
    CHECK(ov.entries[1].dialect == Dialect::kLevantine);
    CHECK(ov.excluded == 0);
  }

  TEST_CASE("manifest errors") {
    const auto dir = test_util::temp_dir("manifest_err");
    write_tone(dir / "a.wav");
    write_tone(dir / "b.wav");
    write_tone(dir / "c.wav");

    write_text(dir / "missing.tsv",
               "clip_id\tpath\tcountry\n"
               "a\ta.wav\tEgypt\n"
               "b\tnope1.wav\tJordan\n"
               "c\tnope2.wav\tQatar\n");
    CHECK_THROWS_AS(load_manifest(dir / "missing.tsv"), IoError);
    const auto msg = error_of([&] { load_manifest(dir / "missing.tsv"); });
    CHECK(msg.find("nope1.wav") != std::string::npos);
    CHECK(msg.find("nope2.wav") != std::string::npos);

    write_text(dir / "short.tsv",
               "clip_id\tpath\tcountry\n"
               "a\ta.wav\tEgypt\n"
               "b\tb.wav\n");
    CHECK_THROWS_AS(load_manifest(dir / "short.tsv"), FormatError);
    CHECK(error_of([&] { load_manifest(dir / "short.tsv"); }).find("short.tsv:3") != std::string::npos);

    write_text(dir / "bad_dialect.tsv", "clip_id\tpath\tdialect\na\ta.wav\tMaghrebi\n");
    CHECK(error_of([&] { load_manifest(dir / "bad_dialect.tsv"); }).find(":2") != std::string::npos);

    write_text(dir / "bad_duration.tsv", "clip_id\tpath\tcountry\tduration_s\na\ta.wav\tEgypt\t-1\n");
    CHECK_THROWS_AS(load_manifest(dir / "bad_duration.tsv"), FormatError);

    write_text(dir / "no_path.tsv", "clip_id\tcountry\na\tEgypt\n");
    CHECK_THROWS_AS(load_manifest(dir / "no_path.tsv"), FormatError);

    write_text(dir / "two_classes.tsv",
               "clip_id\tpath\tcountry\n"
               "a\ta.wav\tEgypt\n"
               "b\tb.wav\tJordan\n");
    CHECK_THROWS_AS(load_manifest(dir / "two_classes.tsv"), InvalidArgument);
    CHECK_THROWS_AS(load_manifest(dir / "absent.tsv"), IoError);
  }

  TEST_CASE("synthetic corpus counts, layout and determinism") {
    const auto a = test_util::temp_dir("synth_a");
    const auto b = test_util::temp_dir("synth_b");
    const auto c = test_util::temp_dir("synth_c");
    const auto ds = synth_corpus(6, 7, a, {}, 2);
    synth_corpus(6, 7, b);
    synth_corpus(6, 8, c);
    REQUIRE(ds.entries.size() == 18);
    CHECK(ds.class_counts() == std::array<std::size_t, 3>{6, 6, 6});
    CHECK(fs::exists(a / "manifest.tsv"));
    CHECK(test_util::read_bytes(a / "manifest.tsv") == test_util::read_bytes(b / "manifest.tsv"));
    bool any_differs = false;
    for (const auto& e : ds.entries) {
      CAPTURE(e.path);
      CHECK(fs::exists(a / e.path));
      CHECK(e.path.rfind(e.dialect == Dialect::kEgyptian ? "egyptian/" : e.dialect == Dialect::kLevantine ? "levantine/" : "gulf/", 0) == 0);
      CHECK(e.duration_s >= 1.0);
      CHECK(e.duration_s <= 3.0);
      CHECK(map_country_to_dialect(e.country) == e.dialect);
      CHECK(test_util::read_bytes(a / e.path) == test_util::read_bytes(b / e.path));
      if (test_util::read_bytes(a / e.path) != test_util::read_bytes(c / e.path)) any_differs = true;
    }
    CHECK(any_differs);
    const auto loaded = load_manifest(a / "manifest.tsv");
    CHECK(loaded.entries.size() == 18);

    CHECK_THROWS_AS(synth_corpus(3, 1, test_util::temp_dir("synth_small")), InvalidArgument);
    const auto blocker = test_util::temp_dir("synth_blocked") / "file";
    write_text(blocker, "x");
    CHECK_THROWS_AS(synth_corpus(4, 1, blocker / "sub"), IoError);
  }

  TEST_CASE("synthetic classes have their configured dominant band") {
    const auto dir = test_util::temp_dir("synth_bands");
    const SynthOptions opts;
    const auto ds = synth_corpus(5, 3, dir, opts);
    std::array<std::array<double, 3>, 3> mean{};
    for (const auto& e : ds.entries) {
      const auto clip = audio::read_wav(ds.resolve(e));
      std::array<double, 3> bands{};
      double total = 0.0;
      for (std::size_t b = 0; b < 3; ++b) {
        bands[b] = band_power(clip.samples, opts.formant_hz[b] - 250.0, opts.formant_hz[b] + 250.0);
        total += bands[b];
      }
      for (std::size_t b = 0; b < 3; ++b) mean[static_cast<std::size_t>(e.dialect)][b] += bands[b] / total;
    }
    for (std::size_t k = 0; k < 3; ++k) {
      CAPTURE(k);
      const auto& m = mean[k];
      CHECK(static_cast<std::size_t>(std::max_element(m.begin(), m.end()) - m.begin()) == k);
    }
  }

  TEST_CASE("nearest-centroid separability on mean mel energies") {
    const auto dir = test_util::temp_dir("synth_centroid");
    const auto ds = synth_corpus(12, 5, dir);
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    for (const auto& e : ds.entries) {
      feats.push_back(mean_log_mel(audio::read_wav(ds.resolve(e))));
      labels.push_back(static_cast<int>(e.dialect));
    }
    // Leave-one-out so no clip is scored against a centroid containing it.
    int correct = 0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      std::array<std::vector<double>, 3> centroid;
      std::array<int, 3> count{};
      for (auto& c : centroid) c.assign(feats[0].size(), 0.0);
      for (std::size_t j = 0; j < feats.size(); ++j) {
        if (j == i) continue;
        const auto k = static_cast<std::size_t>(labels[j]);
        for (std::size_t d = 0; d < feats[j].size(); ++d) centroid[k][d] += feats[j][d];
        ++count[k];
      }
      int best = 0;
      double best_dist = 1e300;
      for (int k = 0; k < 3; ++k) {
        double dist = 0.0;
        for (std::size_t d = 0; d < feats[i].size(); ++d)
          dist += std::pow(feats[i][d] - centroid[static_cast<std::size_t>(k)][d] / count[static_cast<std::size_t>(k)], 2);
        if (dist < best_dist) {
          best_dist = dist;
          best = k;
        }
      }
      correct += best == labels[i];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(feats.size()) > 0.9);
  }
}

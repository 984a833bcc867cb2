#include "dialect_lab/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "dialect_lab/audio.h"
#include "dialect_lab/errors.h"
#include "dialect_lab/rng.h"

namespace dialect_lab::corpus {

namespace fs = std::filesystem;

namespace {

std::string lower_trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

std::string to_string(Dialect d) {
  switch (d) {
    case Dialect::kEgyptian: return "Egyptian";
    case Dialect::kLevantine: return "Levantine";
    case Dialect::kGulf: return "Gulf";
  }
  return "?";
}

std::optional<Dialect> parse_dialect(const std::string& text) {
  const std::string t = lower_trim(text);
  if (t == "egyptian") return Dialect::kEgyptian;
  if (t == "levantine") return Dialect::kLevantine;
  if (t == "gulf") return Dialect::kGulf;
  return std::nullopt;
}

std::vector<std::string> class_names() { return {"Egyptian", "Levantine", "Gulf"}; }

std::optional<Dialect> map_country_to_dialect(const std::string& country) {
  static const std::map<std::string, Dialect> kCountries = {
      {"egypt", Dialect::kEgyptian},
      {"jordan", Dialect::kLevantine},
      {"palestine", Dialect::kLevantine},
      {"lebanon", Dialect::kLevantine},
      {"syria", Dialect::kLevantine},
      {"saudi arabia", Dialect::kGulf},
      {"uae", Dialect::kGulf},
      {"united arab emirates", Dialect::kGulf},
      {"qatar", Dialect::kGulf},
      {"kuwait", Dialect::kGulf},
  };
  auto it = kCountries.find(lower_trim(country));
  if (it == kCountries.end()) return std::nullopt;
  return it->second;
}

std::array<std::size_t, kNumDialects> DialectDataset::class_counts() const {
  std::array<std::size_t, kNumDialects> counts{};
  for (const auto& e : entries) ++counts[static_cast<std::size_t>(e.dialect)];
  return counts;
}

std::string DialectDataset::balance_summary() const {
  const auto counts = class_counts();
  std::ostringstream os;
  for (std::size_t c = 0; c < kNumDialects; ++c) {
    if (c) os << ' ';
    os << to_string(static_cast<Dialect>(c)) << '=' << counts[c];
  }
  return os.str();
}

DialectDataset load_manifest(const fs::path& path, const fs::path& audio_root) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DialectDataset ds;
  ds.root = audio_root.empty() ? path.parent_path() : audio_root;

  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  std::size_t n_cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[lower_trim(fields[i])] = i;
      n_cols = fields.size();
      if (!col.count("clip_id") || !col.count("path"))
        throw FormatError(path.string() + ":" + std::to_string(line_no) +
                          ": header must name the clip_id and path columns");
      continue;
    }
    auto fail = [&](const std::string& why) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != n_cols)
      fail("expected " + std::to_string(n_cols) + " tab-separated fields, found " +
           std::to_string(fields.size()));
    auto field = [&](const char* name) -> std::string {
      auto it = col.find(name);
      return it == col.end() ? std::string() : fields[it->second];
    };
    ManifestEntry e;
    e.clip_id = field("clip_id");
    e.path = field("path");
    e.country = field("country");
    if (e.clip_id.empty()) fail("empty clip_id");
    if (e.path.empty()) fail("empty path");

    const std::string dialect = field("dialect");
    std::optional<Dialect> d;
    if (!lower_trim(dialect).empty()) {
      d = parse_dialect(dialect);
      if (!d) fail("unknown dialect '" + dialect + "'");
    } else {
      d = map_country_to_dialect(e.country);
    }
    if (!d) {
      ++ds.excluded;
      continue;
    }
    e.dialect = *d;

    const std::string dur = field("duration_s");
    if (!dur.empty()) {
      try {
        std::size_t used = 0;
        e.duration_s = std::stod(dur, &used);
        if (used != dur.size()) throw std::invalid_argument(dur);
      } catch (const std::exception&) {
        fail("invalid duration_s '" + dur + "'");
      }
      if (!(e.duration_s > 0.0)) fail("duration_s must be positive");
    }
    e.split = lower_trim(field("split"));
    if (!e.split.empty() && e.split != "train" && e.split != "val")
      fail("split must be train, val or empty, got '" + e.split + "'");
    ds.entries.push_back(std::move(e));
  }
  if (col.empty()) throw FormatError(path.string() + ": manifest is empty");

  std::vector<std::string> missing;
  for (auto& e : ds.entries) {
    const fs::path p = ds.resolve(e);
    if (!fs::is_regular_file(p)) {
      missing.push_back(p.string());
      continue;
    }
    if (e.duration_s <= 0.0 && p.extension() == ".wav") e.duration_s = audio::read_wav(p).duration();
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " audio file(s) listed in " +
                      path.string() + " do not exist:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < kNumDialects; ++c)
    if (counts[c] == 0)
      throw InvalidArgument(path.string() + ": no " + to_string(static_cast<Dialect>(c)) +
                            " clips after filtering (" + std::to_string(ds.excluded) +
                            " row(s) excluded)");
  return ds;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << "clip_id\tpath\tcountry\tdialect\tduration_s\tsplit\n";
  for (const auto& e : entries) {
    char dur[32];
    std::snprintf(dur, sizeof dur, "%.6f", e.duration_s);
    out << e.clip_id << '\t' << e.path << '\t' << e.country << '\t' << to_string(e.dialect)
        << '\t' << dur << '\t' << e.split << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

namespace {

const std::vector<std::string>& countries_of(Dialect d) {
  static const std::vector<std::string> kEgy{"Egypt"};
  static const std::vector<std::string> kLev{"Jordan", "Palestine", "Lebanon", "Syria"};
  static const std::vector<std::string> kGulf{"Saudi Arabia", "UAE", "Qatar", "Kuwait"};
  switch (d) {
    case Dialect::kEgyptian: return kEgy;
    case Dialect::kLevantine: return kLev;
    default: return kGulf;
  }
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

audio::AudioClip synth_clip(Dialect d, std::size_t index, std::uint64_t seed,
                            const SynthOptions& o) {
  Rng rng = make_rng(seed, "synth:" + to_string(d), index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double fs_hz = o.sample_rate;
  const double f0 = o.f0_min_hz + (o.f0_max_hz - o.f0_min_hz) * unit(rng);
  const double seconds = o.min_seconds + (o.max_seconds - o.min_seconds) * unit(rng);
  const double gain = 0.3 + 0.5 * unit(rng);
  const double formant = o.formant_hz[static_cast<std::size_t>(d)] * (0.95 + 0.1 * unit(rng));
  const auto n = static_cast<std::size_t>(std::lround(seconds * fs_hz));

  // Harmonic amplitudes follow a resonance at the formant over a weak
  // 1/k tilt; phases are random.
  std::vector<double> amp, freq, phase;
  for (std::size_t k = 1; k * f0 < 0.45 * fs_hz; ++k) {
    const double f = static_cast<double>(k) * f0;
    const double x = (f - formant) / o.formant_bandwidth_hz;
    amp.push_back(1.0 / (1.0 + x * x) + 0.02 / static_cast<double>(k));
    freq.push_back(f);
    phase.push_back(2.0 * std::numbers::pi * unit(rng));
  }
  // Slow amplitude modulation (syllable-like) at 2-5 Hz.
  const double am_rate = 2.0 + 3.0 * unit(rng);
  const double am_phase = 2.0 * std::numbers::pi * unit(rng);

  audio::AudioClip clip;
  clip.sample_rate = fs_hz;
  clip.samples.assign(n, 0.0);
  // Each harmonic is a rotating phasor, re-anchored to the exact phase every
  // kResync samples to keep rounding drift negligible.
  constexpr std::size_t kResync = 1024;
  const std::size_t H = amp.size();
  std::vector<std::complex<double>> z(H), step(H);
  for (std::size_t k = 0; k < H; ++k)
    step[k] = std::polar(1.0, 2.0 * std::numbers::pi * freq[k] / fs_hz);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs_hz;
    if (i % kResync == 0)
      for (std::size_t k = 0; k < H; ++k)
        z[k] = std::polar(1.0, 2.0 * std::numbers::pi * freq[k] * t + phase[k]);
    double s = 0.0;
    for (std::size_t k = 0; k < H; ++k) {
      s += amp[k] * z[k].imag();
      z[k] *= step[k];
    }
    clip.samples[i] = s * (0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase));
  }
  double power = 0.0;
  for (double v : clip.samples) power += v * v;
  power /= static_cast<double>(n);
  const double noise_sd = std::sqrt(power / std::pow(10.0, o.snr_db / 10.0));
  for (double& v : clip.samples) v += noise_sd * gauss(rng);

  double peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  const std::size_t fade = std::min(n / 2, static_cast<std::size_t>(0.01 * fs_hz));
  for (std::size_t i = 0; i < n; ++i) {
    double w = 1.0;
    if (i < fade) w = static_cast<double>(i) / static_cast<double>(fade);
    if (n - 1 - i < fade) w = std::min(w, static_cast<double>(n - 1 - i) / static_cast<double>(fade));
    clip.samples[i] *= w * gain / peak;
  }
  return clip;
}

}  // namespace

DialectDataset synth_corpus(std::size_t n_per_class, std::uint64_t seed, const fs::path& out_dir,
                            const SynthOptions& opts, std::size_t jobs) {
  if (n_per_class < 4) throw InvalidArgument("synth-corpus needs at least 4 clips per class");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw IoError("cannot create output directory " + out_dir.string() +
                  (ec ? ": " + ec.message() : ""));

  DialectDataset ds;
  ds.root = out_dir;
  for (std::size_t c = 0; c < kNumDialects; ++c) {
    const auto d = static_cast<Dialect>(c);
    const auto& countries = countries_of(d);
    fs::create_directories(out_dir / lower(to_string(d)), ec);
    if (ec) throw IoError("cannot create " + (out_dir / lower(to_string(d))).string());
    for (std::size_t i = 0; i < n_per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", lower(to_string(d)).c_str(), i);
      ManifestEntry e;
      e.clip_id = id;
      e.path = lower(to_string(d)) + "/" + e.clip_id + ".wav";
      e.country = countries[i % countries.size()];
      e.dialect = d;
      ds.entries.push_back(std::move(e));
    }
  }

  std::vector<std::string> errors(ds.entries.size());
  auto work = [&](std::size_t worker, std::size_t n_workers) {
    for (std::size_t k = worker; k < ds.entries.size(); k += n_workers) {
      auto& e = ds.entries[k];
      try {
        auto clip = synth_clip(e.dialect, k % n_per_class, seed, opts);
        clip.clip_id = e.clip_id;
        e.duration_s = clip.duration();
        audio::write_wav(clip, ds.resolve(e));
      } catch (const std::exception& ex) {
        errors[k] = ex.what();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, ds.entries.size()));
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(work, w, jobs);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (!err.empty()) throw IoError(err);
  write_manifest(ds.entries, out_dir / "manifest.tsv");
  return ds;
}

}  // namespace dialect_lab::corpus

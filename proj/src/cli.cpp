#include "dialect_lab/cli.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dialect_lab/audio.h"
#include "dialect_lab/augment.h"
#include "dialect_lab/corpus.h"
#include "dialect_lab/errors.h"
#include "dialect_lab/eval.h"
#include "dialect_lab/features.h"
#include "dialect_lab/models.h"
#include "dialect_lab/trainer.h"

namespace dialect_lab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPaper = " [paper]";
constexpr const char* kTool = " [tool default]";
constexpr const char* kSeedEnv = "DIALECT_LAB_SEED";

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

/// A directory argument means its manifest.tsv.
fs::path manifest_path(const fs::path& in) {
  return fs::is_directory(in) ? in / "manifest.tsv" : in;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Runs fn(0..n-1) on up to `jobs` threads. Every index runs; the error of
/// the lowest failing index is rethrown so failures are reported the same
/// way regardless of scheduling.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void write_run_manifest(const fs::path& dir, const std::string& command, const json& config,
                        const json& inputs, const json& outputs, const json& seed) {
  json m = {{"tool", "dialect_lab"},
            {"tool_version", kToolVersion},
            {"command", command},
            {"seed", seed},
            {"config", config},
            {"inputs", inputs},
            {"outputs", outputs}};
  ensure_dir(dir);
  write_text(dir / "run_manifest.json", m.dump(2) + "\n");
}

// Config files: either flat key=value lines or a run_manifest.json (whose
// "config" object is used). Keys are long option names; '_' and '-' are
// interchangeable.
json load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  json cfg = json::object();
  auto normalize = [](std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  };
  const std::string t = trim(text);
  if (path.extension() == ".json" || (!t.empty() && t.front() == '{')) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    const json& src = j.contains("config") && j["config"].is_object() ? j["config"] : j;
    for (const auto& [k, v] : src.items()) cfg[normalize(k)] = v;
    return cfg;
  }
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    cfg[normalize(trim(line.substr(0, eq)))] = value;
  }
  return cfg;
}

std::vector<std::string> config_to_args(const std::string& key, const json& v) {
  const std::string name = "--" + key;
  if (v.is_array()) {
    if (v.empty()) return {};
    std::vector<std::string> out{name};
    for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    return out;
  }
  if (v.is_boolean()) return {name + "=" + (v.get<bool>() ? "true" : "false")};
  if (v.is_string()) {
    if (v.get<std::string>().empty()) return {};
    return {name + "=" + v.get<std::string>()};
  }
  if (v.is_null()) return {};
  return {name + "=" + v.dump()};
}

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  const std::string t = trim(text);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw InvalidArgument(origin + " must be a non-negative integer, got '" + text + "'");
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw InvalidArgument(origin + " is out of range: '" + text + "'");
  }
}

/// Expands --config and the seed environment fallback into explicit
/// arguments. Precedence: command line, then config file, then
/// DIALECT_LAB_SEED, then built-in defaults.
std::vector<std::string> expand_args(CLI::App* sub, const std::vector<std::string>& user) {
  std::set<std::string> given;
  std::optional<std::string> config_file;
  for (std::size_t i = 1; i < user.size(); ++i) {
    const std::string& a = user[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const std::string name = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(name);
    if (name == "config") {
      if (eq != std::string::npos)
        config_file = a.substr(eq + 1);
      else if (i + 1 < user.size())
        config_file = user[i + 1];
    }
  }
  const bool has_seeds_opt = sub->get_option_no_throw("--seeds") != nullptr;
  auto seed_given = [&](const std::set<std::string>& names) {
    return names.count("seed") || names.count("seeds");
  };

  std::vector<std::string> extra;
  std::set<std::string> from_config;
  if (config_file) {
    const json cfg = load_config(*config_file);
    for (const auto& [key, value] : cfg.items()) {
      if (key == "config") continue;
      if (sub->get_option_no_throw("--" + key) == nullptr)
        throw InvalidArgument("config file " + *config_file + ": '" + key +
                              "' is not an option of '" + sub->get_name() + "'");
      if (given.count(key)) continue;
      if ((key == "seed" || key == "seeds") && has_seeds_opt && seed_given(given)) continue;
      from_config.insert(key);
      for (auto& a : config_to_args(key, value)) extra.push_back(std::move(a));
    }
  }
  if (sub->get_option_no_throw("--seed") != nullptr && !seed_given(given) &&
      !seed_given(from_config)) {
    if (const char* env = std::getenv(kSeedEnv); env != nullptr && *env != '\0')
      extra.push_back("--seed=" + std::to_string(parse_seed(env, kSeedEnv)));
  }
  std::vector<std::string> args{user[0]};
  args.insert(args.end(), extra.begin(), extra.end());
  args.insert(args.end(), user.begin() + 1, user.end());
  return args;
}

trainer::LabeledSet load_features(const corpus::DialectDataset& ds,
                                  features::FeatureKind expected) {
  trainer::LabeledSet data;
  data.class_names = corpus::class_names();
  for (const auto& e : ds.entries) {
    auto fm = features::read_feature_cache(ds.resolve(e));
    if (fm.kind != expected)
      throw InvalidArgument(ds.resolve(e).string() + " holds " + features::to_string(fm.kind) +
                            " features, expected " + features::to_string(expected));
    fm.clip_id = e.clip_id;
    data.items.push_back(std::move(fm));
    data.labels.push_back(static_cast<int>(e.dialect));
  }
  return data;
}

/// The split recorded in the manifest, if every entry carries one.
std::optional<trainer::Split> manifest_split(const corpus::DialectDataset& ds) {
  trainer::Split split;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    const auto& s = ds.entries[i].split;
    if (s.empty()) return std::nullopt;
    (s == "val" ? split.val : split.train).push_back(i);
  }
  if (split.train.empty() || split.val.empty())
    throw InvalidArgument("the manifest assigns every clip to one split; need both train and val");
  return split;
}

// ---------------------------------------------------------------- commands

struct PrepareOptions {
  std::string in, audio_root, out;
  double rate = audio::kCanonicalRate;
  double trim_db = 30.0;
  double max_seconds = 10.0;
  bool denoise = false;
  std::size_t jobs = 1;

  json config() const {
    return {{"in", in},           {"audio-root", audio_root},   {"out", out},
            {"rate", rate},       {"trim-db", trim_db},         {"max-seconds", max_seconds},
            {"denoise", denoise}, {"jobs", jobs}};
  }
};

int run_prepare(const PrepareOptions& o, std::ostream& out, std::ostream& err) {
  if (!(o.rate > 0.0)) throw InvalidArgument("--rate must be positive");
  if (!(o.max_seconds > 0.0)) throw InvalidArgument("--max-seconds must be positive");
  const fs::path in_manifest = manifest_path(o.in);
  const auto ds = corpus::load_manifest(in_manifest, o.audio_root);
  if (ds.excluded > 0)
    err << "prepare: excluded " << ds.excluded << " row(s) without a dialect class\n";
  const fs::path out_dir = o.out;
  ensure_dir(out_dir);

  std::vector<std::vector<corpus::ManifestEntry>> pieces(ds.entries.size());
  parallel_for(ds.entries.size(), o.jobs, [&](std::size_t i) {
    const auto& e = ds.entries[i];
    auto clip = audio::read_wav(ds.resolve(e));
    clip.clip_id = e.clip_id;
    if (clip.sample_rate != o.rate) clip = audio::resample(clip, o.rate);
    if (o.denoise) clip = audio::reduce_noise(clip);
    clip = audio::trim_silence(clip, o.trim_db);
    if (clip.empty()) return;
    clip = audio::normalize_peak(clip);
    const std::string subdir = lower(corpus::to_string(e.dialect));
    ensure_dir(out_dir / subdir);
    for (auto& piece : audio::segment(clip, o.max_seconds)) {
      corpus::ManifestEntry pe = e;
      pe.clip_id = piece.clip_id;
      pe.path = subdir + "/" + piece.clip_id + ".wav";
      pe.duration_s = piece.duration();
      audio::write_wav(piece, out_dir / pe.path);
      pieces[i].push_back(std::move(pe));
    }
  });
  std::vector<corpus::ManifestEntry> entries;
  std::size_t silent = 0;
  for (auto& p : pieces) {
    if (p.empty()) ++silent;
    for (auto& e : p) entries.push_back(std::move(e));
  }
  if (silent > 0) err << "prepare: dropped " << silent << " silent clip(s)\n";
  corpus::write_manifest(entries, out_dir / "manifest.tsv");
  write_run_manifest(out_dir, "prepare", o.config(), {in_manifest.string()},
                     {(out_dir / "manifest.tsv").string()}, nullptr);
  out << "prepared " << entries.size() << " clip(s) from " << ds.entries.size()
      << " input(s) into " << out_dir.string() << "\n";
  return kExitOk;
}

struct AugmentOptions {
  std::string in, out;
  int copies = 1;
  std::string pitch = "-2:2", stretch = "0.9:1.1", snr = "10:20", speed = "0.9:1.1";
  std::uint64_t seed = 1;
  double val_fraction = 0.2;
  std::uint64_t split_seed = 1;
  std::size_t jobs = 1;

  json config() const {
    return {{"in", in},           {"out", out},         {"copies", copies},
            {"pitch-semitones", pitch}, {"stretch-rate", stretch}, {"snr-db", snr},
            {"speed-factor", speed}, {"seed", seed},      {"val-fraction", val_fraction},
            {"split-seed", split_seed}, {"jobs", jobs}};
  }
};

int run_augment(const AugmentOptions& o, std::ostream& out, std::ostream& err) {
  const auto spec = augment::AugmentSpec::from_config({{"pitch_semitones", o.pitch},
                                                       {"stretch_rate", o.stretch},
                                                       {"snr_db", o.snr},
                                                       {"speed_factor", o.speed},
                                                       {"copies_per_clip", std::to_string(o.copies)},
                                                       {"seed", std::to_string(o.seed)}});
  spec.validate();
  const fs::path in_manifest = manifest_path(o.in);
  auto ds = corpus::load_manifest(in_manifest);
  if (ds.excluded > 0)
    err << "augment: excluded " << ds.excluded << " row(s) without a dialect class\n";

  // Clips without a split are assigned one first, so that augmented copies
  // of a clip never land on the validation side.
  std::vector<std::size_t> unassigned;
  std::vector<int> labels;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    if (!ds.entries[i].split.empty()) continue;
    unassigned.push_back(i);
    labels.push_back(static_cast<int>(ds.entries[i].dialect));
  }
  if (!unassigned.empty()) {
    const auto split = trainer::stratified_split(labels, o.val_fraction, o.split_seed);
    for (std::size_t k : split.train) ds.entries[unassigned[k]].split = "train";
    for (std::size_t k : split.val) ds.entries[unassigned[k]].split = "val";
  }

  const fs::path out_dir = o.out;
  ensure_dir(out_dir);
  std::vector<std::vector<corpus::ManifestEntry>> produced(ds.entries.size());
  parallel_for(ds.entries.size(), o.jobs, [&](std::size_t i) {
    const auto& e = ds.entries[i];
    const std::string subdir = lower(corpus::to_string(e.dialect));
    ensure_dir(out_dir / subdir);
    auto original = audio::read_wav(ds.resolve(e));
    original.clip_id = e.clip_id;
    corpus::ManifestEntry oe = e;
    oe.path = subdir + "/" + e.clip_id + ".wav";
    oe.duration_s = original.duration();
    audio::write_wav(original, out_dir / oe.path);
    produced[i].push_back(oe);
    if (e.split != "train") return;
    for (int k = 0; k < spec.copies_per_clip; ++k) {
      auto copy = augment::augment_copy(original, spec, k);
      corpus::ManifestEntry ce = oe;
      ce.clip_id = copy.clip_id;
      ce.path = subdir + "/" + copy.clip_id + ".wav";
      ce.duration_s = copy.duration();
      audio::write_wav(copy, out_dir / ce.path);
      produced[i].push_back(std::move(ce));
    }
  });
  std::vector<corpus::ManifestEntry> entries;
  for (auto& p : produced)
    for (auto& e : p) entries.push_back(std::move(e));
  corpus::write_manifest(entries, out_dir / "manifest.tsv");
  write_run_manifest(out_dir, "augment", o.config(), {in_manifest.string()},
                     {(out_dir / "manifest.tsv").string()}, o.seed);
  out << "augment: " << ds.entries.size() << " original(s), " << entries.size() - ds.entries.size()
      << " augmented cop(ies) written to " << out_dir.string() << "\n";
  return kExitOk;
}

struct ExtractOptions {
  std::string in, out, features;
  std::size_t n_coeffs = 13;
  double win_ms = 25.0, hop_ms = 10.0;
  std::size_t n_mels = 26, n_fft = 512;
  int level = features::kWaveletLevel;
  std::size_t jobs = 1;

  json config() const {
    return {{"in", in},         {"out", out},       {"features", features},
            {"n-coeffs", n_coeffs}, {"win-ms", win_ms}, {"hop-ms", hop_ms},
            {"n-mels", n_mels}, {"n-fft", n_fft},   {"level", level},
            {"jobs", jobs}};
  }
};

int run_extract(const ExtractOptions& o, std::ostream& out, std::ostream& err) {
  const auto kind = features::parse_feature_kind(o.features);
  features::MfccConfig mcfg;
  mcfg.n_coeffs = o.n_coeffs;
  mcfg.win_ms = o.win_ms;
  mcfg.hop_ms = o.hop_ms;
  mcfg.n_mels = o.n_mels;
  mcfg.n_fft = o.n_fft;
  if (kind == features::FeatureKind::kMfcc) mcfg.validate(audio::kCanonicalRate);
  if (o.level < 1 || o.level > 9) throw InvalidArgument("--level must be in [1, 9]");

  const fs::path in_manifest = manifest_path(o.in);
  const auto ds = corpus::load_manifest(in_manifest);
  if (ds.excluded > 0)
    err << "extract: excluded " << ds.excluded << " row(s) without a dialect class\n";
  std::set<std::string> ids;
  for (const auto& e : ds.entries)
    if (!ids.insert(e.clip_id).second)
      throw InvalidArgument("duplicate clip_id '" + e.clip_id + "' in " + in_manifest.string());

  const fs::path out_dir = o.out;
  ensure_dir(out_dir);
  std::vector<corpus::ManifestEntry> entries = ds.entries;
  parallel_for(ds.entries.size(), o.jobs, [&](std::size_t i) {
    const auto& e = ds.entries[i];
    auto clip = audio::read_wav(ds.resolve(e));
    clip.clip_id = e.clip_id;
    if (clip.sample_rate != audio::kCanonicalRate) clip = audio::resample(clip, audio::kCanonicalRate);
    features::FeatureMatrix fm;
    try {
      fm = kind == features::FeatureKind::kMfcc ? features::mfcc(clip, mcfg)
                                                : features::wavelet_features(clip, o.level);
    } catch (const Error& ex) {
      throw InvalidArgument("clip '" + e.clip_id + "': " + ex.what());
    }
    entries[i].path = e.clip_id + ".afea";
    entries[i].duration_s = clip.duration();
    features::write_feature_cache(fm, out_dir / entries[i].path);
  });
  corpus::write_manifest(entries, out_dir / "manifest.tsv");
  write_run_manifest(out_dir, "extract", o.config(), {in_manifest.string()},
                     {(out_dir / "manifest.tsv").string()}, nullptr);
  out << "extracted " << features::to_string(kind) << " features for " << entries.size()
      << " clip(s) into " << out_dir.string() << "\n";
  return kExitOk;
}

struct TrainOptions {
  std::string in, out, features, model, cell = "lstm";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::size_t epochs = 30, batch = 32, patience = 5;
  double lr = 0.001, val_fraction = 0.2, min_delta = 1e-5;
  std::uint64_t split_seed = 1;
  std::size_t frames = 0;
  bool quiet = false;

  std::vector<std::uint64_t> resolved_seeds() const {
    if (seed_opt != nullptr && seed_opt->count() > 0) return {seed};
    return seeds;
  }
  json config() const {
    return {{"in", in},
            {"out", out},
            {"features", features},
            {"model", model},
            {"cell", cell},
            {"seeds", resolved_seeds()},
            {"epochs", epochs},
            {"batch", batch},
            {"lr", lr},
            {"patience", patience},
            {"val-fraction", val_fraction},
            {"min-delta", min_delta},
            {"split-seed", split_seed},
            {"frames", frames},
            {"quiet", quiet}};
  }
};

int run_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  models::ModelConfig mcfg;
  mcfg.feature_kind = features::parse_feature_kind(o.features);
  mcfg.arch = models::parse_arch(o.model);
  mcfg.cell_kind = nn::parse_cell_kind(o.cell);
  mcfg.input_frames = o.frames;
  mcfg = mcfg.resolved();
  mcfg.validate();

  trainer::TrainConfig tcfg;
  tcfg.epochs_max = o.epochs;
  tcfg.batch_size = o.batch;
  tcfg.lr = o.lr;
  tcfg.patience = o.patience;
  tcfg.val_fraction = o.val_fraction;
  tcfg.seeds = o.resolved_seeds();
  tcfg.split_seed = o.split_seed;
  tcfg.min_delta = o.min_delta;
  tcfg.validate();

  const fs::path in_manifest = manifest_path(o.in);
  const auto ds = corpus::load_manifest(in_manifest);
  if (ds.excluded > 0)
    err << "train: excluded " << ds.excluded << " row(s) without a dialect class\n";
  const auto data = load_features(ds, mcfg.feature_kind);
  json split_info;
  trainer::Split split;
  if (auto s = manifest_split(ds)) {
    split = *s;
    split_info = {{"source", "manifest"}};
  } else {
    split = trainer::stratified_split(data.labels, tcfg.val_fraction, tcfg.split_seed);
    split_info = {{"source", "stratified"},
                  {"split_seed", tcfg.split_seed},
                  {"val_fraction", tcfg.val_fraction}};
  }
  split_info["n_train"] = split.train.size();
  split_info["n_val"] = split.val.size();

  const fs::path out_dir = o.out;
  ensure_dir(out_dir);
  std::vector<eval::EvalReport> reports;
  json outputs = json::array();
  for (std::uint64_t seed : tcfg.seeds) {
    const std::string tag = "[" + mcfg.id() + " seed " + std::to_string(seed) + "]";
    auto on_epoch = [&](const trainer::EpochRecord& r) {
      if (o.quiet) return;
      err << tag << " epoch " << r.epoch << "/" << tcfg.epochs_max << " train_loss "
          << fmt("%.4f", r.train_loss) << " train_acc " << fmt("%.3f", r.train_accuracy)
          << " val_loss " << fmt("%.4f", r.val_loss) << " val_acc "
          << fmt("%.3f", r.val_accuracy) << "\n";
    };
    auto run = trainer::run_seed(mcfg, tcfg, data, split, seed, on_epoch);
    const fs::path seed_dir = out_dir / ("seed_" + std::to_string(seed));
    ensure_dir(seed_dir);
    json meta = {{"seed", seed},
                 {"train", tcfg.to_json()},
                 {"split", split_info},
                 {"best_epoch", run.history.best_epoch},
                 {"val_loss", run.history.epochs[run.history.best_epoch - 1].val_loss},
                 {"val_accuracy", run.report.accuracy},
                 {"stopped_epoch", run.history.stopped_epoch},
                 {"class_names", data.class_names}};
    models::save_model(run.model, meta, seed_dir / "checkpoint.ckpt");
    write_text(seed_dir / "history.jsonl", run.history.to_jsonl());
    write_text(seed_dir / "report.json", run.report.to_json().dump(2) + "\n");
    outputs.push_back((seed_dir / "checkpoint.ckpt").string());
    out << tag << " best epoch " << run.history.best_epoch << " (stopped at "
        << run.history.stopped_epoch << "), val accuracy " << fmt("%.4f", run.report.accuracy)
        << "\n";
    reports.push_back(std::move(run.report));
  }
  const auto mean = eval::aggregate(reports);
  write_text(out_dir / "report.json", mean.to_json().dump(2) + "\n");
  outputs.push_back((out_dir / "report.json").string());
  write_run_manifest(out_dir, "train", o.config(), {in_manifest.string()}, outputs, tcfg.seeds);
  out << mcfg.display_name() << ": mean val accuracy over " << reports.size() << " seed(s) "
      << fmt("%.4f", mean.accuracy) << "\n";
  return kExitOk;
}

struct EvaluateOptions {
  std::string checkpoint, in, out, split = "val", average = "macro";

  json config() const {
    return {{"checkpoint", checkpoint}, {"in", in}, {"out", out}, {"split", split},
            {"average", average}};
  }
};

int run_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& /*err*/) {
  const auto mode = eval::parse_average_mode(o.average);
  if (o.split != "val" && o.split != "train" && o.split != "all")
    throw InvalidArgument("--split must be val, train or all");
  auto loaded = models::load_model(o.checkpoint);
  auto& model = loaded.model;
  const auto cfg = model.config();

  const fs::path in_manifest = manifest_path(o.in);
  const auto ds = corpus::load_manifest(in_manifest);
  const auto data = load_features(ds, cfg.feature_kind);
  std::vector<std::size_t> subset;
  if (o.split == "all") {
    for (std::size_t i = 0; i < data.size(); ++i) subset.push_back(i);
  } else {
    std::optional<trainer::Split> split = manifest_split(ds);
    if (!split) {
      const auto& meta = loaded.header.at("metadata").at("train");
      split = trainer::stratified_split(data.labels, meta.at("val_fraction").get<double>(),
                                        meta.at("split_seed").get<std::uint64_t>());
    }
    subset = o.split == "val" ? split->val : split->train;
  }
  const auto xs = trainer::prepare_inputs(data, subset, cfg, model.normalizer);
  std::vector<int> ys;
  for (std::size_t i : subset) ys.push_back(data.labels[i]);
  const auto ev = trainer::evaluate(model, xs, ys);
  auto report = eval::metrics(eval::confusion(ys, ev.predictions, data.class_names));
  report.config_id = cfg.id();
  report.display_name = cfg.display_name();
  if (loaded.header.contains("metadata") && loaded.header["metadata"].contains("seed"))
    report.seeds = {loaded.header["metadata"]["seed"].get<std::uint64_t>()};

  const fs::path out_dir = o.out.empty() ? fs::path(o.checkpoint).parent_path() : fs::path(o.out);
  ensure_dir(out_dir);
  write_text(out_dir / "evaluation.json", report.to_json().dump(2) + "\n");
  json cfg_json = o.config();
  cfg_json["out"] = out_dir.string();
  write_run_manifest(out_dir, "evaluate", cfg_json, {o.checkpoint, in_manifest.string()},
                     {(out_dir / "evaluation.json").string()}, nullptr);
  const std::vector<eval::EvalReport> one{report};
  out << eval::render_table(one, mode);
  out << "evaluated " << ys.size() << " clip(s), mean loss " << fmt("%.4f", ev.mean_loss) << "\n";
  return kExitOk;
}

struct ReportOptions {
  std::vector<std::string> inputs;
  std::string out = ".", average = "macro", format = "text";

  json config() const {
    return {{"inputs", inputs}, {"out", out}, {"average", average}, {"format", format}};
  }
};

int run_report(const ReportOptions& o, std::ostream& out, std::ostream& /*err*/) {
  const auto mode = eval::parse_average_mode(o.average);
  if (o.format != "text" && o.format != "json")
    throw InvalidArgument("--format must be text or json");
  std::vector<eval::EvalReport> reports;
  json inputs = json::array();
  for (const auto& in : o.inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "report.json";
    try {
      reports.push_back(eval::EvalReport::from_json(read_json(p)));
    } catch (const json::exception& e) {
      throw FormatError(p.string() + " is not an evaluation report: " + e.what());
    }
    inputs.push_back(p.string());
  }
  const std::string table = eval::render_table(reports, mode);
  const json table_json = eval::render_json(reports, mode);
  const fs::path out_dir = o.out;
  ensure_dir(out_dir);
  write_text(out_dir / "table.txt", table);
  write_text(out_dir / "table.json", table_json.dump(2) + "\n");
  write_run_manifest(out_dir, "report", o.config(), inputs,
                     {(out_dir / "table.txt").string(), (out_dir / "table.json").string()},
                     nullptr);
  if (o.format == "json")
    out << table_json.dump(2) << "\n";
  else
    out << table;
  return kExitOk;
}

struct SynthOptions {
  std::size_t n = 50;
  std::uint64_t seed = 1;
  std::string out;
  std::size_t jobs = 1;

  json config() const { return {{"n", n}, {"seed", seed}, {"out", out}, {"jobs", jobs}}; }
};

int run_synth(const SynthOptions& o, std::ostream& out, std::ostream& /*err*/) {
  const auto ds = corpus::synth_corpus(o.n, o.seed, o.out, {}, o.jobs);
  write_run_manifest(o.out, "synth-corpus", o.config(), json::array(),
                     {(fs::path(o.out) / "manifest.tsv").string()}, o.seed);
  out << "synthesized " << ds.entries.size() << " clip(s) (" << ds.balance_summary() << ") into "
      << o.out << "\n";
  return kExitOk;
}

template <typename T>
CLI::Option* add(CLI::App* app, const std::string& name, T& var, const std::string& desc,
                 const char* provenance) {
  return app->add_option(name, var, desc + provenance)->capture_default_str();
}

CLI::Option* add_flag(CLI::App* app, const std::string& name, bool& var, const std::string& desc,
                      const char* provenance) {
  return app->add_flag(name, var, desc + provenance)->capture_default_str();
}

CLI::Option* add_required(CLI::App* app, const std::string& name, std::string& var,
                          const std::string& desc) {
  return app->add_option(name, var, desc + " [required]")->required();
}

void add_config(CLI::App* app) {
  app->add_option("--config", "key=value file or run_manifest.json supplying option values; "
                              "command-line flags take precedence [tool default]");
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Arabic dialect recognition with MFCC / wavelet features and CNN / RNN "
               "classifiers. Seed fallback: DIALECT_LAB_SEED.",
               "dialect_lab"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough(false);

  PrepareOptions prep_o;
  auto* prep = app.add_subcommand(
      "prepare", "Manifest -> canonical clips: resample, trim silence, normalize, segment");
  add_config(prep);
  add_required(prep, "--in", prep_o.in, "Input manifest TSV (or its directory)");
  add(prep, "--audio-root", prep_o.audio_root, "Root for relative audio paths (default: manifest dir)", kTool);
  add_required(prep, "--out", prep_o.out, "Output directory");
  add(prep, "--rate", prep_o.rate, "Target sample rate in Hz", kPaper);
  add(prep, "--trim-db", prep_o.trim_db, "Silence threshold below the loudest window, dB", kTool);
  add(prep, "--max-seconds", prep_o.max_seconds, "Maximum segment length, s", kTool);
  add_flag(prep, "--denoise", prep_o.denoise, "Apply spectral-gating noise reduction", kTool);
  add(prep, "--jobs", prep_o.jobs, "Worker threads", kTool);

  AugmentOptions aug_o;
  auto* aug = app.add_subcommand(
      "augment", "Assign a train/val split and add augmented copies of the training clips");
  add_config(aug);
  add_required(aug, "--in", aug_o.in, "Input manifest TSV (or its directory)");
  add_required(aug, "--out", aug_o.out, "Output directory");
  add(aug, "--copies", aug_o.copies, "Augmented copies per training clip", kTool);
  add(aug, "--pitch-semitones", aug_o.pitch, "Pitch shift range lo:hi (use --pitch-semitones=-2:2)", kTool);
  add(aug, "--stretch-rate", aug_o.stretch, "Time-stretch rate range lo:hi", kTool);
  add(aug, "--snr-db", aug_o.snr, "Noise SNR range lo:hi, dB", kTool);
  add(aug, "--speed-factor", aug_o.speed, "Speed perturbation range lo:hi", kTool);
  add(aug, "--seed", aug_o.seed, "Augmentation seed", kTool);
  add(aug, "--val-fraction", aug_o.val_fraction, "Validation fraction for unassigned clips", kPaper);
  add(aug, "--split-seed", aug_o.split_seed, "Seed of the train/val split", kTool);
  add(aug, "--jobs", aug_o.jobs, "Worker threads", kTool);

  ExtractOptions ext_o;
  auto* ext = app.add_subcommand("extract", "Compute MFCC or wavelet feature caches");
  add_config(ext);
  add_required(ext, "--in", ext_o.in, "Input manifest TSV (or its directory)");
  add_required(ext, "--out", ext_o.out, "Output directory");
  add_required(ext, "--features", ext_o.features, "Feature type: mfcc or wavelet")
      ->check(CLI::IsMember({"mfcc", "wavelet"}));
  add(ext, "--n-coeffs", ext_o.n_coeffs, "MFCC coefficients per frame", kPaper);
  add(ext, "--win-ms", ext_o.win_ms, "MFCC window length, ms", kPaper);
  add(ext, "--hop-ms", ext_o.hop_ms, "MFCC hop length, ms", kPaper);
  add(ext, "--n-mels", ext_o.n_mels, "Mel filters", kTool);
  add(ext, "--n-fft", ext_o.n_fft, "FFT size", kTool);
  add(ext, "--level", ext_o.level, "Wavelet decomposition level (db4)", kPaper);
  add(ext, "--jobs", ext_o.jobs, "Worker threads", kTool);

  TrainOptions tr_o;
  auto* tr = app.add_subcommand("train", "Train one feature/architecture configuration");
  add_config(tr);
  add_required(tr, "--in", tr_o.in, "Feature manifest TSV (or its directory)");
  add_required(tr, "--out", tr_o.out, "Output directory");
  add_required(tr, "--features", tr_o.features, "Feature type: mfcc or wavelet")
      ->check(CLI::IsMember({"mfcc", "wavelet"}));
  add_required(tr, "--model", tr_o.model, "Architecture: cnn or rnn")
      ->check(CLI::IsMember({"cnn", "rnn"}));
  add(tr, "--cell", tr_o.cell, "Recurrent cell: lstm or simple", kTool)
      ->check(CLI::IsMember({"lstm", "simple"}));
  tr_o.seed_opt = tr->add_option("--seed", tr_o.seed, "Single seed; overrides --seeds" +
                                                          std::string(kTool));
  add(tr, "--seeds", tr_o.seeds, "Seeds, one run each (three runs)", kPaper)->delimiter(',');
  add(tr, "--epochs", tr_o.epochs, "Maximum epochs", kPaper);
  add(tr, "--batch", tr_o.batch, "Batch size", kPaper);
  add(tr, "--lr", tr_o.lr, "Adam learning rate", kPaper);
  add(tr, "--patience", tr_o.patience, "Early-stopping patience, epochs", kPaper);
  add(tr, "--val-fraction", tr_o.val_fraction, "Validation fraction", kPaper);
  add(tr, "--min-delta", tr_o.min_delta, "Minimum validation-loss decrease that counts", kTool);
  add(tr, "--split-seed", tr_o.split_seed, "Seed of the train/val split", kTool);
  add(tr, "--frames", tr_o.frames, "Input frames T (0: 300 for mfcc, 32 for wavelet)", kTool);
  add_flag(tr, "--quiet", tr_o.quiet, "Suppress per-epoch progress", kTool);

  EvaluateOptions ev_o;
  auto* evc = app.add_subcommand("evaluate", "Evaluate a checkpoint on a feature manifest");
  add_config(evc);
  add_required(evc, "--checkpoint", ev_o.checkpoint, "Checkpoint file");
  add_required(evc, "--in", ev_o.in, "Feature manifest TSV (or its directory)");
  add(evc, "--out", ev_o.out, "Output directory (default: checkpoint dir)", kTool);
  add(evc, "--split", ev_o.split, "Clips to evaluate: val, train or all", kTool)
      ->check(CLI::IsMember({"val", "train", "all"}));
  add(evc, "--average", ev_o.average, "Averaging for precision/recall/F1: macro or weighted", kTool)
      ->check(CLI::IsMember({"macro", "weighted"}));

  ReportOptions rep_o;
  auto* rep = app.add_subcommand("report", "Render the model comparison table");
  add_config(rep);
  rep->add_option("--inputs", rep_o.inputs, "Report JSON files (or train output dirs) [required]")
      ->required()
      ->delimiter(',');
  add(rep, "--out", rep_o.out, "Output directory for table.txt / table.json", kTool);
  add(rep, "--average", rep_o.average, "Averaging for precision/recall/F1: macro or weighted", kTool)
      ->check(CLI::IsMember({"macro", "weighted"}));
  add(rep, "--format", rep_o.format, "Console format: text or json", kTool)
      ->check(CLI::IsMember({"text", "json"}));

  SynthOptions syn_o;
  auto* syn = app.add_subcommand("synth-corpus", "Generate a synthetic three-class corpus");
  add_config(syn);
  add(syn, "--n", syn_o.n, "Clips per class", kTool);
  add(syn, "--seed", syn_o.seed, "Generator seed", kTool);
  add_required(syn, "--out", syn_o.out, "Output directory");
  add(syn, "--jobs", syn_o.jobs, "Worker threads", kTool);

  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  std::string stage = "cli";
  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    if (CLI::App* sub = app.get_subcommand_no_throw(args[0])) {
      stage = args[0];
      try {
        args = expand_args(sub, args);
      } catch (const std::exception& e) {
        err << "error [" << stage << "]: " << e.what() << "\n";
        return kExitFailure;
      }
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (prep->parsed()) return run_prepare(prep_o, out, err);
    if (aug->parsed()) return run_augment(aug_o, out, err);
    if (ext->parsed()) return run_extract(ext_o, out, err);
    if (tr->parsed()) return run_train(tr_o, out, err);
    if (evc->parsed()) return run_evaluate(ev_o, out, err);
    if (rep->parsed()) return run_report(rep_o, out, err);
    if (syn->parsed()) return run_synth(syn_o, out, err);
  } catch (const std::exception& e) {
    err << "error [" << stage << "]: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace dialect_lab::cli

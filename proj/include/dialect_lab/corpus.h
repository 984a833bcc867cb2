#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dialect_lab::corpus {

enum class Dialect { kEgyptian = 0, kLevantine = 1, kGulf = 2 };

inline constexpr std::size_t kNumDialects = 3;

std::string to_string(Dialect d);
/// Case-insensitive; nullopt for anything but the three class names.
std::optional<Dialect> parse_dialect(const std::string& text);
/// {"Egyptian", "Levantine", "Gulf"}, indexed by the enum value.
std::vector<std::string> class_names();

/// Egypt -> Egyptian; Jordan, Palestine, Lebanon, Syria -> Levantine;
/// Saudi Arabia, UAE / United Arab Emirates, Qatar, Kuwait -> Gulf.
/// Matching ignores case and surrounding whitespace.
std::optional<Dialect> map_country_to_dialect(const std::string& country);

struct ManifestEntry {
  std::string clip_id;
  std::string path;  // as written in the manifest, relative to the root
  std::string country;
  Dialect dialect = Dialect::kEgyptian;
  double duration_s = 0.0;
  std::string split;  // "", "train" or "val"
};

struct DialectDataset {
  std::filesystem::path root;  // entry paths resolve against this
  std::vector<ManifestEntry> entries;
  std::size_t excluded = 0;  // rows dropped for lack of a dialect

  std::filesystem::path resolve(const ManifestEntry& e) const { return root / e.path; }
  std::array<std::size_t, kNumDialects> class_counts() const;
  /// "Egyptian=50 Levantine=50 Gulf=50".
  std::string balance_summary() const;
};

/// Manifest TSV: UTF-8, header row naming the columns clip_id, path,
/// country, dialect, duration_s, split (clip_id and path are required, the
/// others optional and in any order). An empty dialect is derived from the
/// country; rows where neither yields a class are excluded and counted.
/// Relative paths resolve against `audio_root` (default: the manifest's
/// directory). Throws FormatError naming the line of a malformed row,
/// IoError listing every missing file, and InvalidArgument when one of the
/// three classes ends up empty.
DialectDataset load_manifest(const std::filesystem::path& path,
                             const std::filesystem::path& audio_root = {});

/// Writes all six columns with a header row.
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

struct SynthOptions {
  std::array<double, kNumDialects> formant_hz{500.0, 1500.0, 2500.0};
  double formant_bandwidth_hz = 150.0;
  double f0_min_hz = 100.0;
  double f0_max_hz = 220.0;
  double min_seconds = 1.0;
  double max_seconds = 3.0;
  double snr_db = 25.0;
  double sample_rate = 16000.0;
};

/// Three acoustically distinct classes of harmonic signals whose spectral
/// envelope peaks at a class-specific formant, with random pitch, duration,
/// amplitude and additive noise. Writes out_dir/{class}/{clip_id}.wav and
/// out_dir/manifest.tsv. Deterministic per seed; clips are independent and
/// are generated on `jobs` threads.
DialectDataset synth_corpus(std::size_t n_per_class, std::uint64_t seed,
                            const std::filesystem::path& out_dir,
                            const SynthOptions& opts = {}, std::size_t jobs = 1);

}  // namespace dialect_lab::corpus

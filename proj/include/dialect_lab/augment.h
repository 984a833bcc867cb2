#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dialect_lab/audio.h"

namespace dialect_lab::augment {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameter ranges for random augmentation plus the global seed. Each
/// augmented copy draws one value from every range.
struct AugmentSpec {
  Range pitch_semitones{-2.0, 2.0};
  Range stretch_rate{0.9, 1.1};
  Range snr_db{10.0, 20.0};
  Range speed_factor{0.9, 1.1};
  int copies_per_clip = 1;
  std::uint64_t seed = 1;

  /// Throws InvalidArgument if a range is unordered, a rate range leaves
  /// (0.5, 2.0), or copies_per_clip < 0.
  void validate() const;

  /// Flat key=value form: pitch_semitones=-2:2, stretch_rate=0.9:1.1, ...
  std::map<std::string, std::string> to_config() const;
  static AugmentSpec from_config(const std::map<std::string, std::string>& kv);
};

/// Phase-vocoder pitch shift; length is preserved exactly.
/// Requires |semitones| <= 12.
audio::AudioClip pitch_shift(const audio::AudioClip& clip, double semitones);

/// Phase-vocoder tempo change without pitch change. rate > 1 shortens.
/// Output length is round(len / rate). Requires rate in [0.5, 2.0].
audio::AudioClip time_stretch(const audio::AudioClip& clip, double rate);

/// Playback-rate change (resampling without pitch correction): output
/// length round(len / factor), frequencies scaled by factor.
/// Requires factor in (0.5, 2.0).
audio::AudioClip speed_perturb(const audio::AudioClip& clip, double factor);

/// Adds white Gaussian noise scaled so the measured SNR equals `snr_db`.
/// Throws InvalidArgument for a zero-power clip.
audio::AudioClip add_noise(const audio::AudioClip& clip, double snr_db,
                           std::uint64_t seed);

/// Parameters drawn for one augmented copy.
struct AugmentDraw {
  double semitones;
  double stretch_rate;
  double speed_factor;
  double snr_db;
  std::uint64_t noise_seed;
};

/// Draw for copy `copy_index` of `clip_id`, keyed by (spec.seed, clip_id,
/// copy_index) so the result does not depend on processing order.
AugmentDraw draw_parameters(const AugmentSpec& spec, const std::string& clip_id,
                            int copy_index);

/// Applies pitch shift, time stretch, speed perturbation and noise in that
/// order. If the result leaves [-1.05, 1.05] it is re-normalized to the
/// canonical peak.
audio::AudioClip augment_copy(const audio::AudioClip& clip,
                              const AugmentSpec& spec, int copy_index);

inline constexpr double kHeadroom = 1.05;

}  // namespace dialect_lab::augment

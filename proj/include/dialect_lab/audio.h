#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dialect_lab::audio {

inline constexpr double kCanonicalRate = 16000.0;
inline constexpr double kPeakTarget = 0.95;

/// Mono sample buffer. Samples are real amplitudes, nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  double sample_rate = kCanonicalRate;
  std::string clip_id;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Reads a RIFF/WAVE file (16-bit PCM or 32-bit IEEE float, 1 or 2
/// channels). Stereo is averaged to mono; integer samples are divided by
/// 32768. Throws FormatError / UnsupportedError / IoError.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes a 16-bit PCM mono file. Samples are scaled by 32768, rounded and
/// clamped to the int16 range.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// In-memory variants of the above, used by the file functions and tests.
AudioClip decode_wav(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_wav(const AudioClip& clip);

/// Band-limited (Kaiser-windowed sinc) resampling of `x` onto exactly
/// `out_len` samples spanning the same duration. Frequencies scale by
/// x.size() / out_len relative to the sample index.
std::vector<double> resample_to_length(std::span<const double> x,
                                       std::size_t out_len);

/// Resamples to `target_rate`; output length is
/// round(len * target_rate / sample_rate).
AudioClip resample(const AudioClip& clip, double target_rate);

/// Removes leading/trailing 20 ms windows (50% overlap) whose RMS is more
/// than `threshold_db` below the loudest window. A silent clip yields an
/// empty clip.
AudioClip trim_silence(const AudioClip& clip, double threshold_db = 30.0);

/// Scales so that max |sample| == kPeakTarget. All-zero clips are returned
/// unchanged.
AudioClip normalize_peak(const AudioClip& clip);

/// Splits into pieces no longer than `max_seconds`, cutting at the quietest
/// 20 ms window near each boundary. Pieces concatenate to the input.
std::vector<AudioClip> segment(const AudioClip& clip,
                               double max_seconds = 10.0);

/// Spectral gating: the noise magnitude spectrum is the mean of the quietest
/// 10% of STFT frames; it is subtracted from every frame with a floor of
/// 0.05 times the original magnitude.
AudioClip reduce_noise(const AudioClip& clip);

/// RMS of each `win`-sample window taken every `hop` samples. Windows that
/// would overrun the signal are dropped, except that a final window ending
/// exactly at the last sample is appended when the grid does not reach it.
/// Returned alongside each window's start offset.
struct WindowRms {
  std::vector<std::size_t> starts;
  std::vector<double> rms;
};
WindowRms window_rms(std::span<const double> x, std::size_t win,
                     std::size_t hop);

}  // namespace dialect_lab::audio

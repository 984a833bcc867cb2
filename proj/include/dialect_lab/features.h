#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dialect_lab/audio.h"

namespace dialect_lab::features {

enum class FeatureKind : std::uint8_t { kMfcc = 1, kWavelet = 2 };

std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& text);

/// Framing and filterbank parameters for MFCC extraction.
struct MfccConfig {
  std::size_t n_coeffs = 13;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_fft = 512;
  std::size_t n_mels = 26;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;

  std::size_t win_samples(double sample_rate) const;
  std::size_t hop_samples(double sample_rate) const;
  /// Throws InvalidArgument when the invariants do not hold for this rate.
  void validate(double sample_rate) const;
};

/// Complex STFT, row-major (bins x frames).
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& at(std::size_t k, std::size_t f) {
    return data[k * frames + f];
  }
  const std::complex<double>& at(std::size_t k, std::size_t f) const {
    return data[k * frames + f];
  }
};

/// Triangular mel filters over the FFT bins, un-normalized: each triangle
/// peaks at 1 in the mel domain, so adjacent filters sum to 1 between the
/// first and last centre.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  std::vector<double> weights;  // row-major n_mels x n_bins
  std::vector<double> edges_hz;  // n_mels + 2 points: f_{m-1}, f_m, f_{m+1}
  std::vector<std::size_t> center_bins;

  double weight(std::size_t m, std::size_t k) const {
    return weights[m * n_bins + k];
  }
  /// S_m = sum_k power[k] * H_m(k).
  std::vector<double> apply(std::span<const double> power) const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Symmetric Hamming window, w(n) = 0.54 - 0.46 cos(2 pi n / (N - 1)).
std::vector<double> hamming(std::size_t n);

/// Frames of `win` samples every `hop` (frames that would overrun are
/// dropped), Hamming-weighted, zero-padded to n_fft. Throws InvalidArgument
/// if the clip is shorter than one window.
Spectrogram stft(const audio::AudioClip& clip, const MfccConfig& cfg);

/// Throws InvalidArgument when a filter would cover no FFT bin.
MelFilterbank mel_filterbank(const MfccConfig& cfg, double sample_rate);

/// MFCC_n = sum_{m=1}^{M} log(S_m) cos(n pi / M (m - 0.5)), n = 0..n_coeffs-1,
/// with S_m clamped at `log_floor`. No orthonormal scaling.
std::vector<double> cepstrum(std::span<const double> mel_energies,
                             std::size_t n_coeffs, double log_floor = 1e-10);

/// 2D feature array (feature_dim x n_frames), row-major.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  FeatureKind kind = FeatureKind::kMfcc;
  std::string clip_id;

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// MFCC matrix (n_coeffs x n_frames).
FeatureMatrix mfcc(const audio::AudioClip& clip, const MfccConfig& cfg = {});

/// Orthonormal Daubechies-4 analysis filters (8 taps each).
/// Low-pass taps sum to sqrt(2); squared taps sum to 1.
const std::array<double, 8>& db4_lowpass();
const std::array<double, 8>& db4_highpass();

struct WaveletDecomposition {
  std::vector<double> approx;                // a_J
  std::vector<std::vector<double>> details;  // d_1 (finest) .. d_J
  int level = 0;
};

/// Multilevel Mallat decomposition with periodized boundaries. The input
/// length must be divisible by 2^level.
WaveletDecomposition dwt(std::span<const double> signal, int level);

/// Exact inverse of dwt. Throws ShapeError if subband lengths disagree.
std::vector<double> inverse_dwt(const WaveletDecomposition& dec);

inline constexpr std::size_t kWaveletFrame = 512;
inline constexpr int kWaveletLevel = 3;

/// Non-overlapping 512-sample frames (last one zero-padded), each
/// decomposed to `level` and laid out as [aJ | dJ | ... | d1] (for level 3:
/// [a3 | d3 | d2 | d1]). Output shape (512 x n_frames).
FeatureMatrix wavelet_features(const audio::AudioClip& clip,
                               int level = kWaveletLevel);

// Feature cache: "AFEA", u16 version, u8 kind, u8 ndim, u32 dims[ndim],
// row-major float32 payload, all little-endian.
inline constexpr std::uint16_t kCacheVersion = 1;

std::vector<unsigned char> encode_feature_cache(const FeatureMatrix& fm);
FeatureMatrix decode_feature_cache(std::span<const unsigned char> bytes);
void write_feature_cache(const FeatureMatrix& fm,
                         const std::filesystem::path& path);
FeatureMatrix read_feature_cache(const std::filesystem::path& path);

}  // namespace dialect_lab::features

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace dialect_lab::spectral {

/// Column-major complex spectrogram: frames[t][k], k in [0, n_fft/2].
using Spectrogram = std::vector<std::vector<std::complex<double>>>;

/// Periodic Hann window of length n.
std::vector<double> hann(std::size_t n);

/// Centered STFT: the signal is zero-padded by n_fft/2 on both sides and
/// framed every `hop` samples with a periodic Hann window.
Spectrogram stft_centered(std::span<const double> x, std::size_t n_fft,
                          std::size_t hop);

/// Weighted overlap-add inverse of stft_centered, trimmed/padded to
/// `length` samples.
std::vector<double> istft_centered(const Spectrogram& frames,
                                   std::size_t n_fft, std::size_t hop,
                                   std::size_t length);

/// Phase-vocoder time scaling by `rate` (>1 shortens). Output length is
/// exactly round(x.size() / rate). No range check.
std::vector<double> phase_vocoder(std::span<const double> x, double rate,
                                  std::size_t n_fft = 1024,
                                  std::size_t hop = 256);

}  // namespace dialect_lab::spectral

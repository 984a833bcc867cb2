#include "dialect_lab/spectral.h"

#include <algorithm>
#include <cmath>

#include "dialect_lab/errors.h"
#include "dialect_lab/fft.h"

namespace dialect_lab::spectral {

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / n);
  return w;
}

Spectrogram stft_centered(std::span<const double> x, std::size_t n_fft,
                          std::size_t hop) {
  if (n_fft < 2 || hop == 0) throw InvalidArgument("stft: bad frame setup");
  const std::size_t pad = n_fft / 2;
  std::vector<double> padded(x.size() + 2 * pad, 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<long>(pad));

  const std::size_t n_frames = 1 + x.size() / hop;
  padded.resize(std::max(padded.size(), (n_frames - 1) * hop + n_fft), 0.0);

  const auto window = hann(n_fft);
  RealFft fft(n_fft);
  std::vector<double> frame(n_fft);
  Spectrogram out(n_frames, std::vector<std::complex<double>>(fft.bins()));
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t i = 0; i < n_fft; ++i)
      frame[i] = padded[t * hop + i] * window[i];
    fft.forward(frame, out[t]);
  }
  return out;
}

std::vector<double> istft_centered(const Spectrogram& frames,
                                   std::size_t n_fft, std::size_t hop,
                                   std::size_t length) {
  const std::size_t pad = n_fft / 2;
  std::vector<double> y(length, 0.0);
  if (frames.empty()) return y;

  const std::size_t total = n_fft + hop * (frames.size() - 1);
  std::vector<double> acc(total, 0.0), norm(total, 0.0);
  const auto window = hann(n_fft);
  RealFft fft(n_fft);
  std::vector<double> frame(n_fft);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    fft.inverse(frames[t], frame);
    for (std::size_t i = 0; i < n_fft; ++i) {
      acc[t * hop + i] += frame[i] / static_cast<double>(n_fft) * window[i];
      norm[t * hop + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < length && i + pad < total; ++i) {
    double w = norm[i + pad];
    y[i] = w > 1e-10 ? acc[i + pad] / w : 0.0;
  }
  return y;
}

std::vector<double> phase_vocoder(std::span<const double> x, double rate,
                                  std::size_t n_fft, std::size_t hop) {
  if (!(rate > 0.0)) throw InvalidArgument("phase_vocoder: rate must be > 0");
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(x.size()) / rate));
  if (x.empty()) return std::vector<double>(out_len, 0.0);

  const Spectrogram in = stft_centered(x, n_fft, hop);
  const std::size_t bins = n_fft / 2 + 1;
  const std::size_t n_in = in.size();

  std::vector<double> advance(bins);
  for (std::size_t k = 0; k < bins; ++k)
    advance[k] = 2.0 * M_PI * static_cast<double>(k * hop) / n_fft;

  std::vector<double> phase(bins);
  for (std::size_t k = 0; k < bins; ++k) phase[k] = std::arg(in[0][k]);

  const std::vector<std::complex<double>> silent(bins);
  Spectrogram out;
  for (double step = 0.0; step < static_cast<double>(n_in); step += rate) {
    auto i = static_cast<std::size_t>(step);
    const double alpha = step - static_cast<double>(i);
    const auto& c0 = in[i];
    const auto& c1 = i + 1 < n_in ? in[i + 1] : silent;
    std::vector<std::complex<double>> frame(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      double mag = (1.0 - alpha) * std::abs(c0[k]) + alpha * std::abs(c1[k]);
      frame[k] = std::polar(mag, phase[k]);
      double dphase = std::arg(c1[k]) - std::arg(c0[k]) - advance[k];
      dphase -= 2.0 * M_PI * std::round(dphase / (2.0 * M_PI));
      phase[k] += advance[k] + dphase;
    }
    out.push_back(std::move(frame));
  }
  return istft_centered(out, n_fft, hop, out_len);
}

}  // namespace dialect_lab::spectral

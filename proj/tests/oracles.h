#pragma once

// Independent reference implementations used as test oracles. They follow
// the textbook formulas directly (plain DFT, explicit sums, brute-force
// counting) and share no code with the library.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

namespace oracle {

/// Frame-by-frame MFCC straight from the definitions: Hamming-windowed
/// frames, direct DFT power spectrum, triangular mel filters on the mel
/// axis mel(f) = 2595 log10(1 + f / 700), log with floor, then
/// C_n = sum_{m=1}^{M} log(S_m) cos(n pi / M (m - 1/2)).
/// Returns [frame][coefficient].
inline std::vector<std::vector<double>> mfcc(const std::vector<double>& x, double fs,
                                             int n_coeffs = 13, double win_ms = 25.0,
                                             double hop_ms = 10.0, int n_fft = 512,
                                             int n_mels = 26, double fmin = 0.0,
                                             double fmax = 8000.0, double floor = 1e-10) {
  const double pi = std::numbers::pi;
  const int N = static_cast<int>(std::lround(win_ms * fs / 1000.0));
  const int hop = static_cast<int>(std::lround(hop_ms * fs / 1000.0));
  const int L = static_cast<int>(x.size());
  const int frames = L < N ? 0 : 1 + (L - N) / hop;
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };

  std::vector<double> pts(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i)
    pts[static_cast<std::size_t>(i)] = mel(fmin) + (mel(fmax) - mel(fmin)) * i / (n_mels + 1);

  // cos/sin tables for the direct DFT.
  std::vector<double> c(static_cast<std::size_t>(n_fft)), s(static_cast<std::size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i) {
    c[static_cast<std::size_t>(i)] = std::cos(2.0 * pi * i / n_fft);
    s[static_cast<std::size_t>(i)] = std::sin(2.0 * pi * i / n_fft);
  }

  std::vector<std::vector<double>> out;
  for (int f = 0; f < frames; ++f) {
    std::vector<double> frame(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
      const double w = 0.54 - 0.46 * std::cos(2.0 * pi * n / (N - 1));
      frame[static_cast<std::size_t>(n)] = x[static_cast<std::size_t>(f * hop + n)] * w;
    }
    std::vector<double> S(static_cast<std::size_t>(n_mels), 0.0);
    for (int k = 0; k <= n_fft / 2; ++k) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < N; ++n) {
        const auto idx = static_cast<std::size_t>((static_cast<long>(k) * n) % n_fft);
        re += frame[static_cast<std::size_t>(n)] * c[idx];
        im -= frame[static_cast<std::size_t>(n)] * s[idx];
      }
      const double power = re * re + im * im;
      const double mk = mel(k * fs / n_fft);
      for (int m = 0; m < n_mels; ++m) {
        const double lo = pts[static_cast<std::size_t>(m)];
        const double ce = pts[static_cast<std::size_t>(m + 1)];
        const double hi = pts[static_cast<std::size_t>(m + 2)];
        double h = 0.0;
        if (mk > lo && mk <= ce) h = (mk - lo) / (ce - lo);
        else if (mk > ce && mk < hi) h = (hi - mk) / (hi - ce);
        S[static_cast<std::size_t>(m)] += power * h;
      }
    }
    std::vector<double> coeffs(static_cast<std::size_t>(n_coeffs), 0.0);
    for (int n = 0; n < n_coeffs; ++n)
      for (int m = 1; m <= n_mels; ++m)
        coeffs[static_cast<std::size_t>(n)] +=
            std::log(std::max(S[static_cast<std::size_t>(m - 1)], floor)) *
            std::cos(n * pi / n_mels * (m - 0.5));
    out.push_back(std::move(coeffs));
  }
  return out;
}

struct Counts {
  double accuracy = 0.0;
  std::vector<double> precision, recall, f1;
  double macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0;
  double weighted_p = 0.0, weighted_r = 0.0, weighted_f1 = 0.0;
};

/// Classification metrics by direct counting over (label, prediction)
/// pairs, without forming a confusion matrix.
inline Counts count_metrics(const std::vector<int>& y, const std::vector<int>& p, int classes) {
  Counts r;
  const auto n = static_cast<double>(y.size());
  int correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += y[i] == p[i];
  r.accuracy = correct / n;
  for (int c = 0; c < classes; ++c) {
    int tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == c && p[i] == c) ++tp;
      if (y[i] != c && p[i] == c) ++fp;
      if (y[i] == c && p[i] != c) ++fn;
      if (y[i] == c) ++support;
    }
    const double prec = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    r.precision.push_back(prec);
    r.recall.push_back(rec);
    r.f1.push_back(f);
    r.macro_p += prec / classes;
    r.macro_r += rec / classes;
    r.macro_f1 += f / classes;
    r.weighted_p += prec * support / n;
    r.weighted_r += rec * support / n;
    r.weighted_f1 += f * support / n;
  }
  return r;
}

}  // namespace oracle

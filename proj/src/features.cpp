#include "dialect_lab/features.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "dialect_lab/errors.h"
#include "dialect_lab/fft.h"

namespace dialect_lab::features {

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::kMfcc ? "mfcc" : "wavelet";
}

FeatureKind parse_feature_kind(const std::string& text) {
  if (text == "mfcc") return FeatureKind::kMfcc;
  if (text == "wavelet") return FeatureKind::kWavelet;
  throw InvalidArgument("unknown feature kind '" + text +
                        "' (expected mfcc or wavelet)");
}

std::size_t MfccConfig::win_samples(double sample_rate) const {
  return static_cast<std::size_t>(std::lround(win_ms * sample_rate / 1000.0));
}

std::size_t MfccConfig::hop_samples(double sample_rate) const {
  return static_cast<std::size_t>(std::lround(hop_ms * sample_rate / 1000.0));
}

void MfccConfig::validate(double sample_rate) const {
  if (n_coeffs == 0 || n_coeffs > n_mels)
    throw InvalidArgument("mfcc: need 1 <= n_coeffs <= n_mels");
  if (win_samples(sample_rate) < 2 || win_samples(sample_rate) > n_fft)
    throw InvalidArgument("mfcc: window must be 2..n_fft samples");
  if (hop_samples(sample_rate) == 0)
    throw InvalidArgument("mfcc: hop must be at least one sample");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0))
    throw InvalidArgument("mfcc: need 0 <= fmin < fmax <= sample_rate / 2");
  if (!(log_floor > 0.0)) throw InvalidArgument("mfcc: log_floor must be > 0");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  return w;
}

Spectrogram stft(const audio::AudioClip& clip, const MfccConfig& cfg) {
  cfg.validate(clip.sample_rate);
  const std::size_t win = cfg.win_samples(clip.sample_rate);
  const std::size_t hop = cfg.hop_samples(clip.sample_rate);
  if (clip.size() < win)
    throw InvalidArgument("stft: clip shorter than one analysis window (" +
                          std::to_string(clip.size()) + " < " +
                          std::to_string(win) + " samples)");

  Spectrogram out;
  out.frames = 1 + (clip.size() - win) / hop;
  out.bins = cfg.n_fft / 2 + 1;
  out.data.resize(out.bins * out.frames);

  const auto window = hamming(win);
  RealFft fft(cfg.n_fft);
  std::vector<double> frame(win);
  std::vector<std::complex<double>> spec(out.bins);
  for (std::size_t f = 0; f < out.frames; ++f) {
    for (std::size_t n = 0; n < win; ++n)
      frame[n] = clip.samples[f * hop + n] * window[n];
    fft.forward(frame, spec);
    for (std::size_t k = 0; k < out.bins; ++k) out.at(k, f) = spec[k];
  }
  return out;
}

std::vector<double> MelFilterbank::apply(std::span<const double> power) const {
  if (power.size() != n_bins)
    throw ShapeError("mel filterbank: expected " + std::to_string(n_bins) +
                     " bins, got " + std::to_string(power.size()));
  std::vector<double> s(n_mels, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double* row = &weights[m * n_bins];
    double acc = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) acc += power[k] * row[k];
    s[m] = acc;
  }
  return s;
}

MelFilterbank mel_filterbank(const MfccConfig& cfg, double sample_rate) {
  cfg.validate(sample_rate);
  MelFilterbank fb;
  fb.n_mels = cfg.n_mels;
  fb.n_bins = cfg.n_fft / 2 + 1;
  fb.weights.assign(fb.n_mels * fb.n_bins, 0.0);

  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> mel_points(fb.n_mels + 2);
  for (std::size_t i = 0; i < mel_points.size(); ++i)
    mel_points[i] = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                 static_cast<double>(fb.n_mels + 1);
  fb.edges_hz.resize(mel_points.size());
  for (std::size_t i = 0; i < mel_points.size(); ++i)
    fb.edges_hz[i] = mel_to_hz(mel_points[i]);

  std::vector<double> bin_mel(fb.n_bins);
  for (std::size_t k = 0; k < fb.n_bins; ++k)
    bin_mel[k] = hz_to_mel(static_cast<double>(k) * sample_rate /
                           static_cast<double>(cfg.n_fft));

  fb.center_bins.resize(fb.n_mels);
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    const double left = mel_points[m];
    const double center = mel_points[m + 1];
    const double right = mel_points[m + 2];
    bool any = false;
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double mel = bin_mel[k];
      double w = 0.0;
      if (mel > left && mel <= center) {
        w = (mel - left) / (center - left);
      } else if (mel > center && mel < right) {
        w = (right - mel) / (right - center);
      }
      fb.weights[m * fb.n_bins + k] = w;
      any = any || w > 0.0;
      if (std::abs(mel - center) < nearest) {
        nearest = std::abs(mel - center);
        fb.center_bins[m] = k;
      }
    }
    if (!any)
      throw InvalidArgument("mel_filterbank: filter " + std::to_string(m) +
                            " covers no FFT bin; reduce n_mels or raise n_fft");
  }
  return fb;
}

std::vector<double> cepstrum(std::span<const double> mel_energies,
                             std::size_t n_coeffs, double log_floor) {
  const std::size_t M = mel_energies.size();
  std::vector<double> log_s(M);
  for (std::size_t m = 0; m < M; ++m)
    log_s[m] = std::log(std::max(mel_energies[m], log_floor));
  std::vector<double> out(n_coeffs, 0.0);
  for (std::size_t n = 0; n < n_coeffs; ++n) {
    double acc = 0.0;
    for (std::size_t m = 1; m <= M; ++m)
      acc += log_s[m - 1] * std::cos(static_cast<double>(n) * M_PI /
                                     static_cast<double>(M) *
                                     (static_cast<double>(m) - 0.5));
    out[n] = acc;
  }
  return out;
}

FeatureMatrix mfcc(const audio::AudioClip& clip, const MfccConfig& cfg) {
  const Spectrogram spec = stft(clip, cfg);
  const MelFilterbank fb = mel_filterbank(cfg, clip.sample_rate);

  FeatureMatrix fm;
  fm.kind = FeatureKind::kMfcc;
  fm.clip_id = clip.clip_id;
  fm.rows = cfg.n_coeffs;
  fm.cols = spec.frames;
  fm.data.assign(fm.rows * fm.cols, 0.0);

  std::vector<double> power(spec.bins);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t k = 0; k < spec.bins; ++k) power[k] = std::norm(spec.at(k, f));
    auto coeffs = cepstrum(fb.apply(power), cfg.n_coeffs, cfg.log_floor);
    for (std::size_t n = 0; n < cfg.n_coeffs; ++n) fm.at(n, f) = coeffs[n];
  }
  return fm;
}

const std::array<double, 8>& db4_lowpass() {
  // Daubechies extremal-phase scaling filter with four vanishing moments.
  static const std::array<double, 8> taps = {
      0.23037781330889650086, 0.71484657055291564709,
      0.63088076792985890788, -0.02798376941685985429,
      -0.18703481171909308408, 0.03084138183556076361,
      0.03288301166688519973, -0.01059740178506903219};
  return taps;
}

const std::array<double, 8>& db4_highpass() {
  static const std::array<double, 8> taps = [] {
    std::array<double, 8> g{};
    const auto& h = db4_lowpass();
    for (std::size_t k = 0; k < 8; ++k)
      g[k] = (k % 2 == 0 ? 1.0 : -1.0) * h[7 - k];
    return g;
  }();
  return taps;
}

WaveletDecomposition dwt(std::span<const double> signal, int level) {
  if (level < 1) throw InvalidArgument("dwt: level must be >= 1");
  const std::size_t block = std::size_t{1} << level;
  if (signal.empty() || signal.size() % block != 0)
    throw InvalidArgument("dwt: length " + std::to_string(signal.size()) +
                          " is not a positive multiple of 2^" +
                          std::to_string(level) + "; pad the input");
  const auto& h = db4_lowpass();
  const auto& g = db4_highpass();

  WaveletDecomposition dec;
  dec.level = level;
  std::vector<double> current(signal.begin(), signal.end());
  for (int j = 0; j < level; ++j) {
    const std::size_t len = current.size();
    const std::size_t half = len / 2;
    std::vector<double> approx(half), detail(half);
    for (std::size_t n = 0; n < half; ++n) {
      double a = 0.0, d = 0.0;
      for (std::size_t k = 0; k < 8; ++k) {
        double v = current[(2 * n + k) % len];
        a += h[k] * v;
        d += g[k] * v;
      }
      approx[n] = a;
      detail[n] = d;
    }
    dec.details.push_back(std::move(detail));
    current = std::move(approx);
  }
  dec.approx = std::move(current);
  return dec;
}

std::vector<double> inverse_dwt(const WaveletDecomposition& dec) {
  if (dec.level < 1 || dec.details.size() != static_cast<std::size_t>(dec.level))
    throw ShapeError("inverse_dwt: detail count does not match level");
  const auto& h = db4_lowpass();
  const auto& g = db4_highpass();

  std::vector<double> current = dec.approx;
  for (int j = dec.level - 1; j >= 0; --j) {
    const auto& detail = dec.details[static_cast<std::size_t>(j)];
    if (detail.size() != current.size() || current.empty())
      throw ShapeError("inverse_dwt: subband lengths are inconsistent at level " +
                       std::to_string(j + 1));
    const std::size_t half = current.size();
    const std::size_t len = 2 * half;
    std::vector<double> out(len, 0.0);
    for (std::size_t n = 0; n < half; ++n)
      for (std::size_t k = 0; k < 8; ++k)
        out[(2 * n + k) % len] += h[k] * current[n] + g[k] * detail[n];
    current = std::move(out);
  }
  return current;
}

FeatureMatrix wavelet_features(const audio::AudioClip& clip, int level) {
  if (clip.empty()) throw InvalidArgument("wavelet_features: clip is empty");
  if (level < 1 || level > 9)
    throw InvalidArgument("wavelet_features: level must be in [1, 9], got " +
                          std::to_string(level));
  const std::size_t n_frames = (clip.size() + kWaveletFrame - 1) / kWaveletFrame;

  FeatureMatrix fm;
  fm.kind = FeatureKind::kWavelet;
  fm.clip_id = clip.clip_id;
  fm.rows = kWaveletFrame;
  fm.cols = n_frames;
  fm.data.assign(fm.rows * fm.cols, 0.0);

  std::vector<double> frame(kWaveletFrame);
  for (std::size_t f = 0; f < n_frames; ++f) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const std::size_t begin = f * kWaveletFrame;
    const std::size_t end = std::min(clip.size(), begin + kWaveletFrame);
    std::copy(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
              clip.samples.begin() + static_cast<std::ptrdiff_t>(end),
              frame.begin());
    const auto dec = dwt(frame, level);
    std::size_t row = 0;
    auto put = [&](const std::vector<double>& band) {
      for (double v : band) fm.at(row++, f) = v;
    };
    put(dec.approx);
    for (int j = level - 1; j >= 0; --j)
      put(dec.details[static_cast<std::size_t>(j)]);
  }
  return fm;
}

namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<unsigned char> encode_feature_cache(const FeatureMatrix& fm) {
  std::vector<unsigned char> out = {'A', 'F', 'E', 'A'};
  put_u16(out, kCacheVersion);
  out.push_back(static_cast<unsigned char>(fm.kind));
  out.push_back(2);
  put_u32(out, static_cast<std::uint32_t>(fm.rows));
  put_u32(out, static_cast<std::uint32_t>(fm.cols));
  out.reserve(out.size() + fm.data.size() * 4);
  for (double v : fm.data) {
    auto f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(out, bits);
  }
  return out;
}

FeatureMatrix decode_feature_cache(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "AFEA", 4) != 0)
    throw FormatError("feature cache: bad magic");
  const std::uint16_t version =
      static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kCacheVersion)
    throw UnsupportedError("feature cache: unsupported version " +
                           std::to_string(version));
  const unsigned kind = bytes[6];
  const unsigned ndim = bytes[7];
  if (kind != 1 && kind != 2) throw FormatError("feature cache: bad kind code");
  if (ndim != 2) throw UnsupportedError("feature cache: expected 2 dimensions");
  if (bytes.size() < 8 + 4 * ndim) throw FormatError("feature cache: truncated");

  FeatureMatrix fm;
  fm.kind = static_cast<FeatureKind>(kind);
  fm.rows = get_u32(bytes.data() + 8);
  fm.cols = get_u32(bytes.data() + 12);
  const std::size_t count = fm.rows * fm.cols;
  const std::size_t offset = 16;
  if (bytes.size() != offset + 4 * count)
    throw FormatError("feature cache: payload size does not match dims");
  fm.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = get_u32(bytes.data() + offset + 4 * i);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    fm.data[i] = f;
  }
  return fm;
}

void write_feature_cache(const FeatureMatrix& fm,
                         const std::filesystem::path& path) {
  auto bytes = encode_feature_cache(fm);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

FeatureMatrix read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  FeatureMatrix fm = decode_feature_cache(bytes);
  fm.clip_id = path.stem().string();
  return fm;
}

}  // namespace dialect_lab::features

#include "dialect_lab/audio.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "dialect_lab/errors.h"
#include "dialect_lab/spectral.h"

namespace dialect_lab::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

// Kaiser window sampled on |d|/half_width in [0, 1].
class KaiserTable {
 public:
  static constexpr double kBeta = 8.0;
  static constexpr std::size_t kSize = 4096;

  KaiserTable() {
    const double norm = std::cyl_bessel_i(0.0, kBeta);
    for (std::size_t i = 0; i <= kSize; ++i) {
      double u = static_cast<double>(i) / kSize;
      table_[i] = std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - u * u)) / norm;
    }
  }

  double operator()(double u) const {
    if (u >= 1.0) return 0.0;
    double pos = u * kSize;
    auto i = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(i);
    return table_[i] + frac * (table_[i + 1] - table_[i]);
  }

 private:
  std::array<double, kSize + 1> table_{};
};

const KaiserTable& kaiser() {
  static const KaiserTable table;
  return table;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = M_PI * x;
  return std::sin(px) / px;
}

std::size_t window_samples(double sample_rate, double seconds) {
  return std::max<std::size_t>(
      2, static_cast<std::size_t>(std::lround(seconds * sample_rate)));
}

}  // namespace

AudioClip decode_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t len = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      // Tolerate a data chunk whose declared length overruns the file
      // (common with streamed writers); anything else is corrupt.
      if (std::memcmp(chunk, "data", 4) != 0)
        throw FormatError("truncated WAV chunk");
      len = static_cast<std::uint32_t>(bytes.size() - body);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError("fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (len < 26) throw FormatError("extensible fmt chunk too short");
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }

  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (data == nullptr) throw FormatError("missing data chunk");
  if (rate == 0) throw FormatError("sample rate is zero");
  if (channels != 1 && channels != 2)
    throw UnsupportedError("unsupported channel count " +
                           std::to_string(channels));
  bool pcm16 = format == kFormatPcm && bits == 16;
  bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32)
    throw UnsupportedError("unsupported WAV encoding (format " +
                           std::to_string(format) + ", " +
                           std::to_string(bits) + " bits)");

  std::size_t bytes_per_sample = bits / 8;
  std::size_t frame_bytes = bytes_per_sample * channels;
  std::size_t n_frames = data_len / frame_bytes;

  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        auto v = static_cast<std::int16_t>(read_u16(p));
        acc += static_cast<double>(v) / 32768.0;
      } else {
        std::uint32_t raw = read_u32(p);
        float v;
        std::memcpy(&v, &raw, sizeof v);
        acc += static_cast<double>(v);
      }
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

std::vector<unsigned char> encode_wav(const AudioClip& clip) {
  if (clip.empty()) throw InvalidArgument("write_wav: clip is empty");
  if (!(clip.sample_rate > 0.0))
    throw InvalidArgument("write_wav: sample rate must be positive");
  auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  auto data_len = static_cast<std::uint32_t>(clip.size() * 2);

  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_len);
  for (double s : clip.samples) {
    double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    AudioClip clip = decode_wav(bytes);
    clip.clip_id = path.stem().string();
    return clip;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(path.string() + ": " + e.what());
  }
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<double> resample_to_length(std::span<const double> x,
                                       std::size_t out_len) {
  std::vector<double> y(out_len, 0.0);
  if (x.empty() || out_len == 0) return y;
  if (out_len == x.size()) {
    std::copy(x.begin(), x.end(), y.begin());
    return y;
  }
  // 64 taps at the lower of the two rates.
  constexpr double kHalfTaps = 32.0;
  const double step = static_cast<double>(x.size()) / out_len;
  const double cutoff = std::min(1.0, 1.0 / step);
  const double half_width = kHalfTaps / cutoff;
  const auto last = static_cast<std::ptrdiff_t>(x.size()) - 1;
  const KaiserTable& win = kaiser();

  for (std::size_t t = 0; t < out_len; ++t) {
    double center = static_cast<double>(t) * step;
    auto lo = std::max<std::ptrdiff_t>(
        0, static_cast<std::ptrdiff_t>(std::ceil(center - half_width)));
    auto hi = std::min<std::ptrdiff_t>(
        last, static_cast<std::ptrdiff_t>(std::floor(center + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      double d = center - static_cast<double>(i);
      acc += x[static_cast<std::size_t>(i)] * cutoff * sinc(cutoff * d) *
             win(std::abs(d) / half_width);
    }
    y[t] = acc;
  }
  return y;
}

AudioClip resample(const AudioClip& clip, double target_rate) {
  if (!(target_rate > 0.0))
    throw InvalidArgument("resample: target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;
  auto out_len = static_cast<std::size_t>(std::llround(
      static_cast<double>(clip.size()) * target_rate / clip.sample_rate));
  AudioClip out;
  out.clip_id = clip.clip_id;
  out.sample_rate = target_rate;
  out.samples = resample_to_length(clip.samples, out_len);
  return out;
}

WindowRms window_rms(std::span<const double> x, std::size_t win,
                     std::size_t hop) {
  WindowRms out;
  if (x.empty()) return out;
  auto rms_at = [&](std::size_t start, std::size_t len) {
    double acc = 0.0;
    for (std::size_t i = start; i < start + len; ++i) acc += x[i] * x[i];
    return std::sqrt(acc / static_cast<double>(len));
  };
  if (x.size() <= win) {
    out.starts.push_back(0);
    out.rms.push_back(rms_at(0, x.size()));
    return out;
  }
  std::size_t start = 0;
  for (; start + win <= x.size(); start += hop) {
    out.starts.push_back(start);
    out.rms.push_back(rms_at(start, win));
  }
  std::size_t tail = x.size() - win;
  if (out.starts.back() != tail) {
    out.starts.push_back(tail);
    out.rms.push_back(rms_at(tail, win));
  }
  return out;
}

AudioClip trim_silence(const AudioClip& clip, double threshold_db) {
  if (clip.empty()) throw InvalidArgument("trim_silence: clip is empty");
  const std::size_t win = window_samples(clip.sample_rate, 0.020);
  const std::size_t hop = std::max<std::size_t>(1, win / 2);
  WindowRms w = window_rms(clip.samples, win, hop);

  double peak = *std::max_element(w.rms.begin(), w.rms.end());
  AudioClip out;
  out.clip_id = clip.clip_id;
  out.sample_rate = clip.sample_rate;
  if (peak <= 0.0) return out;

  const double threshold = peak * std::pow(10.0, -threshold_db / 20.0);
  std::size_t first = w.rms.size(), last = 0;
  for (std::size_t i = 0; i < w.rms.size(); ++i) {
    if (w.rms[i] >= threshold) {
      first = std::min(first, i);
      last = i;
    }
  }
  std::size_t begin = w.starts[first];
  std::size_t end = std::min(clip.size(), w.starts[last] + win);
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

AudioClip normalize_peak(const AudioClip& clip) {
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) return clip;
  AudioClip out = clip;
  const double scale = kPeakTarget / peak;
  for (double& s : out.samples) s *= scale;
  return out;
}

std::vector<AudioClip> segment(const AudioClip& clip, double max_seconds) {
  if (!(max_seconds > 0.0))
    throw InvalidArgument("segment: max_seconds must be positive");
  std::vector<AudioClip> out;
  if (clip.empty()) return out;

  const auto max_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(max_seconds * clip.sample_rate)));
  const std::size_t win = window_samples(clip.sample_rate, 0.020);
  const std::size_t hop = std::max<std::size_t>(1, win / 2);
  // Cut search radius: 0.5 s, shrunk for very short limits.
  const auto radius = std::min<std::size_t>(
      static_cast<std::size_t>(std::lround(0.5 * clip.sample_rate)),
      max_len / 4);

  auto emit = [&](std::size_t begin, std::size_t end) {
    AudioClip piece;
    piece.sample_rate = clip.sample_rate;
    piece.clip_id = clip.clip_id + "_s" + std::to_string(out.size());
    piece.samples.assign(
        clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
        clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(std::move(piece));
  };

  std::size_t begin = 0;
  while (clip.size() - begin > max_len) {
    // Nominal boundary sits `radius` before the hard limit, so the search
    // interval [limit - 2r, limit] never yields an over-long piece.
    const std::size_t limit = begin + max_len;
    const std::size_t lo = limit - 2 * radius;
    std::size_t cut = limit;
    double best = INFINITY;
    if (radius > 0 && win <= 2 * radius) {
      for (std::size_t s = lo; s + win <= limit; s += hop) {
        double acc = 0.0;
        for (std::size_t i = s; i < s + win; ++i)
          acc += clip.samples[i] * clip.samples[i];
        if (acc < best) {
          best = acc;
          cut = s + win / 2;
        }
      }
    }
    if (cut <= begin) cut = limit;
    emit(begin, cut);
    begin = cut;
  }
  emit(begin, clip.size());
  if (out.size() == 1) out.front().clip_id = clip.clip_id;
  return out;
}

AudioClip reduce_noise(const AudioClip& clip) {
  constexpr std::size_t kFft = 512;
  constexpr std::size_t kHop = 128;
  constexpr double kFloor = 0.05;
  if (clip.empty()) return clip;

  auto frames = spectral::stft_centered(clip.samples, kFft, kHop);
  std::vector<double> energy(frames.size(), 0.0);
  for (std::size_t t = 0; t < frames.size(); ++t)
    for (const auto& v : frames[t]) energy[t] += std::norm(v);

  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return energy[a] < energy[b];
                   });
  const std::size_t quiet = std::max<std::size_t>(1, frames.size() / 10);
  const std::size_t bins = kFft / 2 + 1;
  std::vector<double> noise(bins, 0.0);
  for (std::size_t i = 0; i < quiet; ++i)
    for (std::size_t k = 0; k < bins; ++k)
      noise[k] += std::abs(frames[order[i]][k]) / static_cast<double>(quiet);

  for (auto& frame : frames) {
    for (std::size_t k = 0; k < bins; ++k) {
      double mag = std::abs(frame[k]);
      if (mag == 0.0) continue;
      double gated = std::max(mag - noise[k], kFloor * mag);
      frame[k] *= gated / mag;
    }
  }
  AudioClip out = clip;
  out.samples = spectral::istft_centered(frames, kFft, kHop, clip.size());
  return out;
}

}  // namespace dialect_lab::audio

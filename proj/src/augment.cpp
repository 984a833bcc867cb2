#include "dialect_lab/augment.h"

#include <cmath>
#include <sstream>

#include "dialect_lab/errors.h"
#include "dialect_lab/rng.h"
#include "dialect_lab/spectral.h"

namespace dialect_lab::augment {

namespace {

double mean_power(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

std::string format_range(const Range& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.lo << ":" << r.hi;
  return os.str();
}

Range parse_range(const std::string& key, const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos)
    throw InvalidArgument(key + ": expected lo:hi, got '" + text + "'");
  try {
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw InvalidArgument(key + ": cannot parse '" + text + "'");
  }
}

}  // namespace

void AugmentSpec::validate() const {
  auto ordered = [](const char* name, const Range& r) {
    if (!(r.lo <= r.hi))
      throw InvalidArgument(std::string(name) + ": range bounds out of order");
  };
  auto rate_like = [&](const char* name, const Range& r) {
    ordered(name, r);
    if (!(r.lo > 0.5 && r.hi < 2.0))
      throw InvalidArgument(std::string(name) +
                            ": range must lie inside (0.5, 2.0)");
  };
  ordered("pitch_semitones", pitch_semitones);
  if (std::abs(pitch_semitones.lo) > 12.0 || std::abs(pitch_semitones.hi) > 12.0)
    throw InvalidArgument("pitch_semitones: must lie within [-12, 12]");
  rate_like("stretch_rate", stretch_rate);
  rate_like("speed_factor", speed_factor);
  ordered("snr_db", snr_db);
  if (copies_per_clip < 0)
    throw InvalidArgument("copies_per_clip must be >= 0");
}

std::map<std::string, std::string> AugmentSpec::to_config() const {
  return {{"pitch_semitones", format_range(pitch_semitones)},
          {"stretch_rate", format_range(stretch_rate)},
          {"snr_db", format_range(snr_db)},
          {"speed_factor", format_range(speed_factor)},
          {"copies_per_clip", std::to_string(copies_per_clip)},
          {"seed", std::to_string(seed)}};
}

AugmentSpec AugmentSpec::from_config(
    const std::map<std::string, std::string>& kv) {
  AugmentSpec spec;
  for (const auto& [key, value] : kv) {
    if (key == "pitch_semitones") {
      spec.pitch_semitones = parse_range(key, value);
    } else if (key == "stretch_rate") {
      spec.stretch_rate = parse_range(key, value);
    } else if (key == "snr_db") {
      spec.snr_db = parse_range(key, value);
    } else if (key == "speed_factor") {
      spec.speed_factor = parse_range(key, value);
    } else if (key == "copies_per_clip") {
      spec.copies_per_clip = std::stoi(value);
    } else if (key == "seed") {
      spec.seed = std::stoull(value);
    } else {
      throw InvalidArgument("unknown augmentation key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

audio::AudioClip pitch_shift(const audio::AudioClip& clip, double semitones) {
  if (!(std::abs(semitones) <= 12.0))
    throw InvalidArgument("pitch_shift: |semitones| must be <= 12");
  if (semitones == 0.0 || clip.empty()) return clip;
  const double ratio = std::pow(2.0, semitones / 12.0);
  // Stretch to len * ratio at constant pitch, then squeeze back to len
  // samples, which scales every frequency by ratio.
  auto stretched = spectral::phase_vocoder(clip.samples, 1.0 / ratio);
  audio::AudioClip out = clip;
  out.samples = audio::resample_to_length(stretched, clip.size());
  return out;
}

audio::AudioClip time_stretch(const audio::AudioClip& clip, double rate) {
  if (!(rate >= 0.5 && rate <= 2.0))
    throw InvalidArgument("time_stretch: rate must lie in [0.5, 2.0]");
  audio::AudioClip out = clip;
  if (rate == 1.0) return out;
  out.samples = spectral::phase_vocoder(clip.samples, rate);
  return out;
}

audio::AudioClip speed_perturb(const audio::AudioClip& clip, double factor) {
  if (!(factor > 0.5 && factor < 2.0))
    throw InvalidArgument("speed_perturb: factor must lie in (0.5, 2.0)");
  audio::AudioClip out = clip;
  if (factor == 1.0) return out;
  auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.size()) / factor));
  out.samples = audio::resample_to_length(clip.samples, out_len);
  return out;
}

audio::AudioClip add_noise(const audio::AudioClip& clip, double snr_db,
                           std::uint64_t seed) {
  const double signal_power = mean_power(clip.samples);
  if (!(signal_power > 0.0))
    throw InvalidArgument("add_noise: clip has zero power, SNR is undefined");
  Rng rng(mix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> noise(clip.size());
  for (double& v : noise) v = gauss(rng);
  // Scale to the exact target power rather than the expected one.
  const double target = signal_power / std::pow(10.0, snr_db / 10.0);
  const double scale = std::sqrt(target / mean_power(noise));
  audio::AudioClip out = clip;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += scale * noise[i];
  return out;
}

AugmentDraw draw_parameters(const AugmentSpec& spec, const std::string& clip_id,
                            int copy_index) {
  Rng rng = make_rng(spec.seed, clip_id, static_cast<std::uint64_t>(copy_index));
  auto pick = [&](const Range& r) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) * (r.hi - r.lo) +
           r.lo;
  };
  AugmentDraw d{};
  d.semitones = pick(spec.pitch_semitones);
  d.stretch_rate = pick(spec.stretch_rate);
  d.speed_factor = pick(spec.speed_factor);
  d.snr_db = pick(spec.snr_db);
  d.noise_seed = rng();
  return d;
}

audio::AudioClip augment_copy(const audio::AudioClip& clip,
                              const AugmentSpec& spec, int copy_index) {
  const AugmentDraw d = draw_parameters(spec, clip.clip_id, copy_index);
  audio::AudioClip out = pitch_shift(clip, d.semitones);
  out = time_stretch(out, d.stretch_rate);
  out = speed_perturb(out, d.speed_factor);
  out = add_noise(out, d.snr_db, d.noise_seed);
  double peak = 0.0;
  for (double v : out.samples) peak = std::max(peak, std::abs(v));
  if (peak > kHeadroom) out = audio::normalize_peak(out);
  out.clip_id = clip.clip_id + "__aug" + std::to_string(copy_index);
  return out;
}

}  // namespace dialect_lab::augment

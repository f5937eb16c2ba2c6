#include "radur/features.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace radur {

void validate_clip(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw InvalidInput("sample rate must be positive");
  if (clip.samples.empty()) throw InvalidInput("audio clip is empty");
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    if (!std::isfinite(clip.samples[i])) {
      throw InvalidInput("non-finite sample at index " + std::to_string(i));
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filterbank(const MelConfig& cfg, int sample_rate) {
  const std::size_t n_bins = cfg.window / 2 + 1;
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(std::min(cfg.f_max, sample_rate / 2.0));
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  std::vector<double> fb(cfg.n_mels * n_bins, 0.0);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(cfg.window);
      double w = 0.0;
      if (f > left && f <= centre) {
        w = (f - left) / (centre - left);
      } else if (f > centre && f < right) {
        w = (right - f) / (right - centre);
      }
      fb[m * n_bins + k] = w;
    }
  }
  return fb;
}

std::size_t logmel_frame_count(std::size_t n_samples, std::size_t hop) { return 1 + n_samples / hop; }

MelSpectrogram extract_logmel(const AudioClip& clip, const MelConfig& cfg) {
  validate_clip(clip);
  if (cfg.n_mels < 1) throw InvalidInput("n_mels must be >= 1");
  if (cfg.hop == 0 || cfg.window < cfg.hop) throw InvalidInput("window must be >= hop > 0");

  const std::size_t n = clip.samples.size();
  const std::size_t win = cfg.window;
  const std::size_t n_bins = win / 2 + 1;
  const std::size_t frames = logmel_frame_count(n, cfg.hop);
  const auto fb = mel_filterbank(cfg, clip.sample_rate);

  std::vector<double> hann(win);
  for (std::size_t i = 0; i < win; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));
  }

  MelSpectrogram out;
  out.frames = frames;
  out.n_mels = cfg.n_mels;
  out.hop = cfg.hop;
  out.sample_rate = clip.sample_rate;
  out.values.resize(frames * cfg.n_mels);

  Eigen::FFT<double> fft;
  std::vector<double> buf(win);
  std::vector<std::complex<double>> spec;
  std::vector<double> power(n_bins);
  const long pad = static_cast<long>(win / 2);
  for (std::size_t t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t * cfg.hop) - pad;
    for (std::size_t i = 0; i < win; ++i) {
      const long s = start + static_cast<long>(i);
      const double x = (s >= 0 && s < static_cast<long>(n)) ? clip.samples[static_cast<std::size_t>(s)] : 0.0;
      buf[i] = x * hann[i];
    }
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k < n_bins; ++k) power[k] = std::norm(spec[k]);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const double* row = fb.data() + m * n_bins;
      for (std::size_t k = 0; k < n_bins; ++k) e += row[k] * power[k];
      out.values[t * cfg.n_mels + m] = std::log(e + cfg.log_floor);
    }
  }
  return out;
}

FrameLabels render_frame_labels(const EventList& events, double clip_duration, std::size_t t_prime) {
  if (t_prime < 1) throw InvalidInput("t_prime must be >= 1");
  if (!(clip_duration > 0)) throw InvalidInput("clip duration must be positive");
  EventList sorted;
  for (const auto& e : events) {
    if (e.offset < e.onset) throw InvalidAnnotation("event offset precedes onset");
    if (e.onset < 0 || e.offset > clip_duration + 1e-9) {
      throw InvalidAnnotation("event outside clip bounds");
    }
    if (e.offset > e.onset) sorted.push_back(e);
  }
  sort_by_onset(sorted);
  // Merge into a disjoint union.
  std::vector<std::pair<double, double>> spans;
  for (const auto& e : sorted) {
    if (!spans.empty() && e.onset <= spans.back().second) {
      spans.back().second = std::max(spans.back().second, e.offset);
    } else {
      spans.emplace_back(e.onset, e.offset);
    }
  }

  FrameLabels out;
  out.resolution = clip_duration / static_cast<double>(t_prime);
  out.values.assign(t_prime, 0.0);
  const double d = out.resolution;
  for (const auto& [on, off] : spans) {
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(on / d)));
    const auto last = std::min(t_prime - 1, static_cast<std::size_t>(std::max(0.0, std::floor(off / d))));
    for (std::size_t i = first; i <= last; ++i) {
      const double a = static_cast<double>(i) * d;
      const double b = a + d;
      const double cover = std::min(b, off) - std::max(a, on);
      // Accumulate coverage from every span; spans are disjoint.
      if (cover > 0) out.values[i] += cover;
    }
  }
  for (auto& v : out.values) v = (v >= 0.5 * d - 1e-12 * d) ? 1.0 : 0.0;
  return out;
}

}  // namespace radur

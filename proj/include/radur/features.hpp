#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "radur/events.hpp"

namespace radur {

inline constexpr int kSampleRate = 32000;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mono audio with amplitudes in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

/// Throws InvalidInput for empty clips, non-positive rates or non-finite samples.
void validate_clip(const AudioClip& clip);

struct MelConfig {
  std::size_t window = 1024;
  std::size_t hop = 320;
  std::size_t n_mels = 64;
  double f_min = 50.0;
  double f_max = 14000.0;
  double log_floor = 1e-10;
};

/// Log-mel matrix, `frames` x `n_mels`, row-major.
struct MelSpectrogram {
  std::size_t frames = 0;
  std::size_t n_mels = 0;
  std::size_t hop = 0;
  int sample_rate = kSampleRate;
  std::vector<double> values;

  double at(std::size_t t, std::size_t f) const { return values[t * n_mels + f]; }
  double frame_seconds() const { return static_cast<double>(hop) / sample_rate; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// HTK-style triangular filters, n_mels x (window/2 + 1), row-major.
std::vector<double> mel_filterbank(const MelConfig& cfg, int sample_rate);

/// Frame count of center-padded framing: 1 + floor(n_samples / hop).
std::size_t logmel_frame_count(std::size_t n_samples, std::size_t hop);

/// Hann-windowed STFT power, mel-projected, then log(mel + log_floor).
MelSpectrogram extract_logmel(const AudioClip& clip, const MelConfig& cfg = {});

/// Binary per-frame targets at network resolution.
struct FrameLabels {
  std::vector<double> values;
  double resolution = 0.0;  // seconds per frame
};

/// Frame i is active when at least half of [i*d, (i+1)*d), d = duration / t_prime,
/// is covered by the union of `events`.
FrameLabels render_frame_labels(const EventList& events, double clip_duration, std::size_t t_prime);

}  // namespace radur

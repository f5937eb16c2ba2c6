#pragma once

#include <filesystem>
#include <stdexcept>

#include "radur/features.hpp"

namespace radur {

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads 16-bit PCM WAV. Multi-channel input is averaged to mono.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Windowed-sinc resampling to `target_rate`.
AudioClip resample(const AudioClip& clip, int target_rate);

/// read_wav followed by resampling to the fixed analysis rate.
AudioClip load_audio(const std::filesystem::path& path);

}  // namespace radur

#include "radur/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

namespace radur {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 || std::memcmp(data.data() + 8, "WAVE", 4) != 0) {
    throw WavError(path.string() + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int channels = 0, rate = 0, bits = 0, format = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  while (pos + 8 <= data.size()) {
    const std::uint32_t size = le32(&data[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + size > data.size()) throw WavError(path.string() + ": truncated chunk");
    if (std::memcmp(&data[pos], "fmt ", 4) == 0) {
      if (size < 16) throw WavError(path.string() + ": short fmt chunk");
      format = le16(&data[body]);
      channels = le16(&data[body + 2]);
      rate = static_cast<int>(le32(&data[body + 4]));
      bits = le16(&data[body + 14]);
    } else if (std::memcmp(&data[pos], "data", 4) == 0) {
      pcm = &data[body];
      pcm_bytes = size;
    }
    pos = body + size + (size & 1u);
  }
  if (format != 1 || bits != 16) throw WavError(path.string() + ": only 16-bit PCM is supported");
  if (channels < 1 || rate <= 0) throw WavError(path.string() + ": invalid fmt chunk");
  if (!pcm) throw WavError(path.string() + ": missing data chunk");

  const std::size_t frames = pcm_bytes / (2u * static_cast<std::size_t>(channels));
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0;
    for (int c = 0; c < channels; ++c) {
      const auto v = static_cast<std::int16_t>(le16(pcm + 2 * (i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c))));
      acc += v / 32768.0;
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, 2 * n);
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put16(out, static_cast<std::uint16_t>(v));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw WavError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0 || clip.sample_rate <= 0) throw InvalidInput("resample: rates must be positive");
  if (clip.sample_rate == target_rate) return clip;
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to input Nyquist
  constexpr int kHalfTaps = 16;
  const double half_width = kHalfTaps / cutoff;
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(clip.samples.size()) * ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  const long n_in = static_cast<long>(clip.samples.size());
  for (std::size_t j = 0; j < n_out; ++j) {
    const double centre = static_cast<double>(j) / ratio;
    const long lo = static_cast<long>(std::ceil(centre - half_width));
    const long hi = static_cast<long>(std::floor(centre + half_width));
    double acc = 0;
    for (long i = std::max(0L, lo); i <= std::min(n_in - 1, hi); ++i) {
      const double x = (static_cast<double>(i) - centre) * cutoff;
      const double sinc = x == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * x / kHalfTaps);
      acc += clip.samples[static_cast<std::size_t>(i)] * cutoff * sinc * win;
    }
    out.samples[j] = acc;
  }
  return out;
}

AudioClip load_audio(const std::filesystem::path& path) { return resample(read_wav(path), kSampleRate); }

}  // namespace radur

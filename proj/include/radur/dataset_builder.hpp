#pragma once

// Builds (mixture, reference, annotation) triples for target sound detection
// from an event bank, either synthesised or read from a directory of WAVs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "radur/events.hpp"
#include "radur/features.hpp"
#include "radur/losses.hpp"

namespace radur {

class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EventBank {
  struct ClassAudio {
    std::vector<AudioClip> events;
    std::vector<AudioClip> references;
  };
  std::vector<ClassId> classes;
  std::map<ClassId, ClassAudio> audio;
  std::vector<AudioClip> backgrounds;  // optional; synthetic noise otherwise

  void validate() const;
};

struct BankConfig {
  std::size_t events_per_class = 24;
  std::size_t references_per_class = 6;
  /// Event duration ranges in seconds, assigned to classes round-robin.
  std::vector<std::pair<double, double>> duration_ranges{{0.3, 0.9}, {1.0, 3.0}, {2.0, 5.0}, {5.0, 8.0}};
  double reference_duration = 4.0;
  double reference_snr_db = 15.0;
  /// Class centre frequencies are spread evenly on the mel scale in this band.
  double lowest_hz = 100.0;
  double highest_hz = 12000.0;
};

/// Deterministic bank where class c is a narrow-band tone/noise texture
/// centred on its own mel-spaced frequency.
EventBank synthesize_event_bank(std::size_t n_classes, std::uint64_t seed, const BankConfig& cfg = {});

/// Reads <dir>/<class>/events/*.wav and <dir>/<class>/references/*.wav, plus
/// optional <dir>/_background/*.wav. Files are visited in name order.
EventBank load_event_bank(const std::filesystem::path& dir);

/// White noise with the given RMS level.
AudioClip synthesize_background(double duration, double rms, std::uint64_t seed);

struct PlacedEvent {
  ClassId label;
  double onset = 0.0;
  std::size_t source = 0;  // index into the class's event clips
  double snr_db = 0.0;     // event energy over background energy on the event's support
};

struct MixtureSpec {
  AudioClip background;  // synthesised from the seed when empty
  std::vector<PlacedEvent> events;
  double duration = 10.0;
  double background_rms = 0.05;
};

struct Mixture {
  AudioClip audio;
  EventList events;
};

Mixture build_mixture(const MixtureSpec& spec, const EventBank& bank, std::uint64_t seed);

struct ManifestRecord {
  std::string sample_id;
  std::string mixture_path;    // relative POSIX path
  std::string reference_path;  // relative POSIX path
  ClassId target_class;
  EventList events;  // every event in the mixture, all classes
  bool is_negative = false;
};

inline const std::vector<std::string> kSplits{"train", "val", "test"};

struct DatasetManifest {
  std::filesystem::path root;
  std::map<std::string, std::vector<ManifestRecord>> splits;

  const std::vector<ManifestRecord>& split(const std::string& name) const;
};

struct DatasetSizes {
  std::size_t train = 200;
  std::size_t val = 50;
  std::size_t test = 50;
};

struct DatasetConfig {
  double clip_duration = 10.0;
  double snr_low_db = -5.0;
  double snr_high_db = 15.0;
  std::size_t min_events = 1;
  std::size_t max_events = 3;
  double background_rms = 0.05;
};

/// Writes audio under `out_dir` and returns the manifest; the manifest files
/// and duration statistics are written too. Event clips are partitioned across
/// splits so no source instance is shared between them.
DatasetManifest build_dataset(const EventBank& bank, const DatasetSizes& sizes, double negative_ratio,
                              std::uint64_t seed, const std::filesystem::path& out_dir,
                              const DatasetConfig& cfg = {});

/// Per-class mean event duration over the training split, clipped to [0, 10].
DurationStats compute_duration_stats(const DatasetManifest& manifest);

void write_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& root);

void write_duration_stats(const std::filesystem::path& path, const DurationStats& stats);
DurationStats read_duration_stats(const std::filesystem::path& path);

}  // namespace radur

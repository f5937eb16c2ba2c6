#pragma once

// Training loop with the previous-epoch score cache, and corpus evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "radur/dataset_builder.hpp"
#include "radur/losses.hpp"
#include "radur/metrics.hpp"
#include "radur/model.hpp"

namespace radur {

enum class LossKind { bce, focal, du_focal };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 10;
  LossKind loss = LossKind::du_focal;
  bool ee_enabled = true;
  std::uint64_t seed = 0;
  FocalConfig focal;
  DurationWeightConfig duration;
  /// Validation runs the second pass once enhancement is active.
  bool validate_two_pass = true;

  void validate() const;
  bool enhancement_active(std::size_t epoch) const { return ee_enabled && epoch >= warmup_epochs; }
};

struct EvalConfig {
  bool two_pass = true;
  DecodingConfig decoding;
  SegmentConfig segment;
  EventConfig event;
};

/// Detection scores keyed by sample id, stamped with the epoch that produced
/// them. Lookups for epoch e only return entries from epochs before e.
class ScoreCache {
 public:
  struct Entry {
    std::size_t epoch = 0;
    std::vector<double> scores;
  };

  void put(const std::string& sample_id, std::size_t epoch, std::vector<double> scores);
  std::optional<Entry> previous(const std::string& sample_id, std::size_t epoch) const;
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> entries_;
};

/// A manifest record with its features computed.
struct LoadedClip {
  ManifestRecord record;
  MelSpectrogram mixture;
  std::string reference_key;
  double duration = 0.0;
};

struct RecordError {
  std::string sample_id;
  std::string message;
};

struct ClipSet {
  std::vector<LoadedClip> clips;
  std::map<std::string, MelSpectrogram> references;
  std::vector<RecordError> errors;

  const MelSpectrogram& reference(const LoadedClip& clip) const { return references.at(clip.reference_key); }
};

/// Unreadable audio becomes a RecordError; the other records still load.
ClipSet load_clips(const DatasetManifest& manifest, const std::string& split, const MelConfig& mel);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_segment_f = 0.0;
  double val_event_f = 0.0;
  bool ee_active = false;
  bool two_pass = false;
  double seconds = 0.0;
};

struct TrainHooks {
  /// Called before each batch with the epoch stamp of every cached score
  /// used (nullopt when the sample ran without enhancement).
  std::function<void(std::size_t epoch, std::size_t batch, const std::vector<std::optional<std::size_t>>&)> on_batch;
  /// Called after each optimizer step with the batch loss.
  std::function<void(std::size_t epoch, std::size_t batch, double loss)> on_step;
};

struct TrainResult {
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
  double best_val_segment_f = -1.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

struct TrainInputs {
  const ClipSet* train = nullptr;
  const ClipSet* val = nullptr;  // optional
  DurationStats stats;
};

/// Trains `model` in place. Writes metrics.jsonl, best.ckpt and last.ckpt
/// under `run_dir` (when non-empty). Throws NumericError on a non-finite
/// loss after dumping the offending batch to nan_batch.json.
TrainResult train(RadurModel& model, const TrainInputs& inputs, const TrainConfig& cfg, const EvalConfig& eval,
                  const std::filesystem::path& run_dir, const nlohmann::json& run_config = nlohmann::json::object(),
                  const TrainHooks& hooks = {});

struct ClipOutcome {
  std::string sample_id;
  ClassId target_class;
  bool is_negative = false;
  FrameScores scores;
  EventList detected;
};

struct EvaluationReport {
  FScoreReport segment;
  FScoreReport event;
  std::vector<BucketRow> segment_buckets;
  std::vector<BucketRow> event_buckets;
  std::vector<RecordError> errors;
  std::vector<ClipOutcome> clips;
  bool two_pass_used = false;
  double mean_loss = 0.0;  // frame BCE of the final scores
};

/// A clip with detection scores from any source.
struct ScoredRecord {
  ManifestRecord record;
  double duration = 0.0;
  FrameScores scores;
};

/// Decodes and scores precomputed detection scores.
EvaluationReport report_from_scores(const std::vector<ScoredRecord>& records, const EvalConfig& cfg,
                                    const DurationStats& stats = {});

/// Scores every clip. The second pass (enhanced embedding from the first
/// pass scores) runs only when cfg.two_pass and `ee_trained` are both set.
/// Bucket reports are filled when `stats` is non-empty.
EvaluationReport evaluate(const RadurModel& model, const ClipSet& clips, const EvalConfig& cfg, bool ee_trained,
                          const DurationStats& stats = {});

nlohmann::json report_to_json(const EvaluationReport& report);

}  // namespace radur

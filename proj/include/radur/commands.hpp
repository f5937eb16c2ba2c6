#pragma once

// Command implementations behind the radur executable. Each writes its
// artifacts under one directory together with the resolved config.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "radur/config.hpp"
#include "radur/training.hpp"

namespace radur::cli {

/// Writes `config.json` into `dir`.
void write_resolved_config(const std::filesystem::path& dir, const RunConfig& cfg);

/// Builds the corpus into cfg.data_dir.
DatasetManifest cmd_build_data(const RunConfig& cfg, std::ostream& log);

/// Trains on cfg.data_dir; writes metrics.jsonl, best.ckpt, last.ckpt and
/// train_summary.json into cfg.run_dir.
TrainResult cmd_train(const RunConfig& cfg, std::ostream& log);

/// Evaluates a checkpoint (default <run_dir>/best.ckpt) on cfg.split and
/// writes eval_<split>.json, eval_<split>.txt and duration_buckets.svg.
EvaluationReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);

/// Same reports from precomputed scores: JSON Lines of
/// {"sample_id", "frame_resolution", "scores": [...]}.
EvaluationReport cmd_eval_scores(const RunConfig& cfg, const std::filesystem::path& scores, std::ostream& log);

struct Detection {
  EventList events;
  FrameScores scores;
  bool two_pass = false;
};

/// Detects the reference's class in the mixture; writes detections.json and
/// scores.csv into cfg.run_dir.
Detection cmd_detect(const RunConfig& cfg, const std::filesystem::path& mixture,
                     const std::filesystem::path& reference, const std::filesystem::path& checkpoint,
                     std::ostream& log);

struct SweepRow {
  std::vector<double> values;  // one per swept parameter
  double segment_f = 0.0;
  double event_f = 0.0;
};

inline const std::vector<std::string> kSweepParams{"tau", "alpha", "beta", "gamma"};

/// Trains and evaluates once per value (or value pair when two parameters
/// are given). Rows are sorted by parameter value; writes sweep.csv,
/// sweep.txt and, for two parameters, sweep_heatmap_{segment,event}.svg.
std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::vector<std::string>& params,
                                const std::vector<std::vector<double>>& values, std::ostream& log);

/// SHA-256 over the manifest files of a data directory, in split order.
std::string manifest_hash(const std::filesystem::path& data_dir);

/// Plain-text per-class table of a report.
std::string format_report(const EvaluationReport& report);

}  // namespace radur::cli

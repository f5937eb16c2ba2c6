#include "radur/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "radur/plots.hpp"
#include "radur/wav.hpp"

namespace radur::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

DurationStats stats_for(const RunConfig& cfg, const DatasetManifest& manifest) {
  const fs::path path = fs::path(cfg.data_dir) / "duration_stats.json";
  if (fs::exists(path)) return read_duration_stats(path);
  return compute_duration_stats(manifest);
}

// Mixture length as recorded by build-data, falling back to the run config.
double data_clip_duration(const RunConfig& cfg) {
  const fs::path path = fs::path(cfg.data_dir) / "config.json";
  if (!fs::exists(path)) return cfg.clip_duration;
  return read_config_file(path).value("clip_duration", cfg.clip_duration);
}

fs::path checkpoint_or_default(const RunConfig& cfg, const fs::path& checkpoint) {
  return checkpoint.empty() ? fs::path(cfg.run_dir) / "best.ckpt" : checkpoint;
}

std::string bucket_name(const BucketRow& b) {
  return "[" + num(b.lower) + "," + num(b.upper) + (b.upper >= kDefaultDurationBuckets.back() ? "]" : ")");
}

void write_eval_outputs(const RunConfig& cfg, const EvaluationReport& report, std::ostream& log) {
  const fs::path dir = cfg.run_dir;
  fs::create_directories(dir);
  write_resolved_config(dir, cfg);
  write_text(dir / ("eval_" + cfg.split + ".json"), report_to_json(report).dump(2) + "\n");
  const std::string text = format_report(report);
  write_text(dir / ("eval_" + cfg.split + ".txt"), text);
  if (!report.segment_buckets.empty()) {
    std::vector<std::string> categories;
    plots::Series seg{"segment-F", {}}, evt{"event-F", {}};
    for (std::size_t i = 0; i < report.segment_buckets.size(); ++i) {
      categories.push_back(bucket_name(report.segment_buckets[i]));
      seg.values.push_back(report.segment_buckets[i].macro_f);
      evt.values.push_back(report.event_buckets[i].macro_f);
    }
    write_text(dir / "duration_buckets.svg",
               plots::bar_chart("F-measure by mean event duration (s)", categories, {seg, evt}));
  }
  log << text;
}

}  // namespace

void write_resolved_config(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
}

std::string manifest_hash(const fs::path& data_dir) {
  std::string bytes;
  for (const auto& split : kSplits) {
    std::ifstream in(data_dir / (split + ".jsonl"), std::ios::binary);
    if (!in) continue;
    bytes += split + "\n";
    bytes.append(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return sha256_hex(bytes);
}

DatasetManifest cmd_build_data(const RunConfig& cfg, std::ostream& log) {
  EventBank bank;
  if (cfg.bank_dir.empty()) {
    BankConfig bcfg;
    bcfg.events_per_class = cfg.events_per_class;
    bcfg.references_per_class = cfg.references_per_class;
    // Short mixtures cap the long-event ranges.
    for (auto& [lo, hi] : bcfg.duration_ranges) {
      hi = std::min(hi, cfg.clip_duration);
      lo = std::min(lo, hi);
    }
    bank = synthesize_event_bank(cfg.classes, cfg.seed, bcfg);
  } else {
    bank = load_event_bank(cfg.bank_dir);
  }
  const fs::path dir = cfg.data_dir;
  DatasetManifest manifest =
      build_dataset(bank, dataset_sizes(cfg), cfg.negative_ratio, cfg.seed, dir, dataset_config(cfg));
  write_resolved_config(dir, cfg);
  for (const auto& split : kSplits) {
    const auto& recs = manifest.split(split);
    const auto negatives = std::count_if(recs.begin(), recs.end(), [](const auto& r) { return r.is_negative; });
    log << split << ": " << recs.size() << " records (" << negatives << " negative)\n";
  }
  log << "manifest sha256 " << manifest_hash(dir) << "\n";
  return manifest;
}

TrainResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  const DatasetManifest manifest = read_manifest(cfg.data_dir);
  const DurationStats stats = stats_for(cfg, manifest);
  RadurModel model(model_config(cfg), cfg.seed);
  const ClipSet train_set = load_clips(manifest, "train", model.mel);
  const ClipSet val_set = manifest.splits.contains("val") ? load_clips(manifest, "val", model.mel) : ClipSet{};
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& e : set->errors) log << "skipping " << e.sample_id << ": " << e.message << "\n";
  }
  if (train_set.clips.empty()) throw std::runtime_error("no usable training records in " + cfg.data_dir);

  const fs::path dir = cfg.run_dir;
  write_resolved_config(dir, cfg);
  TrainHooks hooks;
  TrainResult result = train(model, {&train_set, &val_set, stats}, train_config(cfg), eval_config(cfg), dir,
                             to_json(cfg), hooks);
  json history = json::array();
  for (const auto& h : result.history) {
    history.push_back({{"epoch", h.epoch},
                       {"train_loss", h.train_loss},
                       {"val_loss", h.val_loss},
                       {"val_segment_f", h.val_segment_f},
                       {"val_event_f", h.val_event_f},
                       {"ee_active", h.ee_active},
                       {"two_pass", h.two_pass}});
    log << "epoch " << h.epoch << "  loss " << fixed(h.train_loss) << "  val seg-F " << fixed(h.val_segment_f)
        << "  val event-F " << fixed(h.val_event_f) << (h.ee_active ? "  [EE]" : "") << "  " << fixed(h.seconds, 1)
        << "s\n";
  }
  write_text(dir / "train_summary.json", json{{"best_epoch", result.best_epoch},
                                              {"best_val_segment_f", result.best_val_segment_f},
                                              {"parameters", model.store.parameter_count()},
                                              {"history", history}}
                                             .dump(2) + "\n");
  log << "best epoch " << result.best_epoch << ", checkpoint " << result.best_checkpoint.string() << "\n";
  return result;
}

EvaluationReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_or_default(cfg, checkpoint));
  const DatasetManifest manifest = read_manifest(cfg.data_dir);
  DurationStats stats = ckpt.meta.duration_stats;
  if (stats.empty()) stats = stats_for(cfg, manifest);
  const ClipSet clips = load_clips(manifest, cfg.split, ckpt.model->mel);
  EvaluationReport report = evaluate(*ckpt.model, clips, eval_config(cfg), ckpt.meta.ee_trained, stats);
  write_eval_outputs(cfg, report, log);
  return report;
}

EvaluationReport cmd_eval_scores(const RunConfig& cfg, const fs::path& scores_path, std::ostream& log) {
  const DatasetManifest manifest = read_manifest(cfg.data_dir);
  std::map<std::string, FrameScores> scores;
  std::ifstream in(scores_path);
  if (!in) throw std::runtime_error("cannot read scores file " + scores_path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    FrameScores fs;
    fs.frame_resolution = j.at("frame_resolution");
    fs.values = j.at("scores").get<std::vector<double>>();
    scores[j.at("sample_id").get<std::string>()] = std::move(fs);
  }
  const double clip_duration = data_clip_duration(cfg);
  std::vector<ScoredRecord> records;
  std::vector<RecordError> errors;
  for (const auto& rec : manifest.split(cfg.split)) {
    auto it = scores.find(rec.sample_id);
    if (it == scores.end()) {
      errors.push_back({rec.sample_id, "no scores supplied"});
      continue;
    }
    records.push_back({rec, clip_duration, it->second});
  }
  EvaluationReport report = report_from_scores(records, eval_config(cfg), stats_for(cfg, manifest));
  report.errors = std::move(errors);
  write_eval_outputs(cfg, report, log);
  return report;
}

Detection cmd_detect(const RunConfig& cfg, const fs::path& mixture, const fs::path& reference,
                     const fs::path& checkpoint, std::ostream& log) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_or_default(cfg, checkpoint));
  const AudioClip mix = load_audio(mixture);
  const AudioClip ref = load_audio(reference);
  validate_clip(mix);
  validate_clip(ref);
  const RadurModel& model = *ckpt.model;
  const MelSpectrogram mix_mel = model.features(mix), ref_mel = model.features(ref);
  Detection det;
  det.scores = model.detect(mix_mel, ref_mel);
  det.two_pass = cfg.two_pass && ckpt.meta.ee_trained;
  if (det.two_pass) det.scores = model.detect(mix_mel, ref_mel, &det.scores.values);
  const EvalConfig ev = eval_config(cfg);
  det.events = decode_events(det.scores.values, det.scores.frame_resolution, ev.decoding, "target");

  const fs::path dir = cfg.run_dir;
  write_resolved_config(dir, cfg);
  json events = json::array();
  for (const auto& e : det.events) events.push_back({{"onset", e.onset}, {"offset", e.offset}, {"class", e.label}});
  write_text(dir / "detections.json", json{{"mixture", mixture.string()},
                                           {"reference", reference.string()},
                                           {"two_pass", det.two_pass},
                                           {"frame_resolution", det.scores.frame_resolution},
                                           {"events", events}}
                                          .dump(2) + "\n");
  std::ostringstream csv;
  csv << "frame,time,score\n" << std::setprecision(10);
  for (std::size_t i = 0; i < det.scores.values.size(); ++i) {
    csv << i << ',' << static_cast<double>(i) * det.scores.frame_resolution << ',' << det.scores.values[i] << '\n';
  }
  write_text(dir / "scores.csv", csv.str());
  log << det.events.size() << " event(s) detected\n";
  for (const auto& e : det.events) log << "  " << fixed(e.onset, 2) << " - " << fixed(e.offset, 2) << " s\n";
  return det;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::vector<std::string>& params,
                                const std::vector<std::vector<double>>& values, std::ostream& log) {
  if (params.empty() || params.size() > 2 || params.size() != values.size()) {
    throw ConfigError("sweep takes one or two parameters, each with a value list");
  }
  for (const auto& p : params) {
    if (std::find(kSweepParams.begin(), kSweepParams.end(), p) == kSweepParams.end()) {
      throw ConfigError("cannot sweep '" + p + "' (choose tau, alpha, beta or gamma)");
    }
  }
  if (params.size() == 2 && params[0] == params[1]) throw ConfigError("sweep parameters must differ");
  std::vector<std::vector<double>> sorted = values;
  for (auto& v : sorted) {
    if (v.empty()) throw ConfigError("sweep needs at least one value per parameter");
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  std::vector<std::vector<double>> grid;
  for (double a : sorted[0]) {
    if (params.size() == 1) {
      grid.push_back({a});
    } else {
      for (double b : sorted[1]) grid.push_back({a, b});
    }
  }
  // Validate every combination before spending time on training.
  std::vector<RunConfig> runs;
  for (const auto& combo : grid) {
    json j = to_json(cfg);
    std::string name;
    for (std::size_t i = 0; i < params.size(); ++i) {
      j[params[i]] = combo[i];
      name += (i ? "_" : "") + params[i] + "=" + num(combo[i]);
    }
    j["run_dir"] = (fs::path(cfg.run_dir) / name).string();
    RunConfig run = run_config_from_json(j);
    run.validate();
    runs.push_back(run);
  }

  write_resolved_config(cfg.run_dir, cfg);
  std::vector<SweepRow> rows;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    log << "== " << fs::path(runs[r].run_dir).filename().string() << "\n";
    const TrainResult trained = cmd_train(runs[r], log);
    const EvaluationReport report = cmd_eval(runs[r], trained.best_checkpoint, log);
    rows.push_back({grid[r], report.segment.macro_f(), report.event.macro_f()});
  }

  std::ostringstream csv, table;
  for (const auto& p : params) csv << p << ',';
  csv << "segment_f,event_f\n";
  for (const auto& p : params) table << std::setw(10) << p;
  table << std::setw(12) << "segment-F" << std::setw(12) << "event-F" << "\n";
  for (const auto& row : rows) {
    for (double v : row.values) {
      csv << num(v) << ',';
      table << std::setw(10) << num(v);
    }
    csv << fixed(row.segment_f) << ',' << fixed(row.event_f) << '\n';
    table << std::setw(12) << fixed(100 * row.segment_f, 2) << std::setw(12) << fixed(100 * row.event_f, 2) << "\n";
  }
  write_text(fs::path(cfg.run_dir) / "sweep.csv", csv.str());
  write_text(fs::path(cfg.run_dir) / "sweep.txt", table.str());
  log << table.str();

  if (params.size() == 2) {
    std::vector<std::string> row_names, col_names;
    for (double v : sorted[0]) row_names.push_back(num(v));
    for (double v : sorted[1]) col_names.push_back(num(v));
    for (const auto& [metric, suffix] : {std::pair{"segment-F", "segment"}, std::pair{"event-F", "event"}}) {
      std::vector<std::vector<double>> cells(sorted[0].size(), std::vector<double>(sorted[1].size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        cells[i / sorted[1].size()][i % sorted[1].size()] = std::string(suffix) == "segment" ? row.segment_f : row.event_f;
      }
      write_text(fs::path(cfg.run_dir) / ("sweep_heatmap_" + std::string(suffix) + ".svg"),
                 plots::heatmap(std::string(metric) + " over " + params[0] + " x " + params[1], params[0], row_names,
                                params[1], col_names, cells));
    }
  }
  return rows;
}

std::string format_report(const EvaluationReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "class" << std::right << std::setw(10) << "seg-F" << std::setw(10) << "seg-P"
      << std::setw(10) << "seg-R" << std::setw(10) << "event-F" << "\n";
  for (const auto& [label, seg] : report.segment.classes) {
    const auto it = report.event.classes.find(label);
    const double ef = it == report.event.classes.end() ? 0.0 : it->second.f();
    out << std::left << std::setw(14) << label << std::right << std::setw(10) << fixed(100 * seg.f(), 2)
        << std::setw(10) << fixed(100 * seg.precision(), 2) << std::setw(10) << fixed(100 * seg.recall(), 2)
        << std::setw(10) << fixed(100 * ef, 2) << "\n";
  }
  out << std::left << std::setw(14) << "macro" << std::right << std::setw(10) << fixed(100 * report.segment.macro_f(), 2)
      << std::setw(10) << fixed(100 * report.segment.macro_precision(), 2) << std::setw(10)
      << fixed(100 * report.segment.macro_recall(), 2) << std::setw(10) << fixed(100 * report.event.macro_f(), 2)
      << "\n";
  if (!report.segment_buckets.empty()) {
    out << "\nmean duration   classes   seg-F    event-F\n";
    for (std::size_t i = 0; i < report.segment_buckets.size(); ++i) {
      const auto& s = report.segment_buckets[i];
      const auto& e = report.event_buckets[i];
      out << std::left << std::setw(16) << bucket_name(s) << std::right << std::setw(7) << s.classes.size()
          << std::setw(9) << (s.macro_f ? fixed(100 * *s.macro_f, 2) : std::string("-")) << std::setw(11)
          << (e.macro_f ? fixed(100 * *e.macro_f, 2) : std::string("-")) << "\n";
    }
  }
  out << "two-pass: " << (report.two_pass_used ? "yes" : "no") << ", clips: " << report.clips.size()
      << ", errors: " << report.errors.size() << "\n";
  return out.str();
}

}  // namespace radur::cli

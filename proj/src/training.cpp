#include "radur/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>

#include "radur/wav.hpp"

namespace radur {

using json = nlohmann::json;

namespace {

Var batch_of(const std::vector<const MelSpectrogram*>& mels, const char* what) {
  try {
    return spectrogram_batch(mels);
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(what) + " in one batch must share a length: " + e.what());
  }
}

// Reference clips may differ in length; equal-length batches go through the
// encoder together, otherwise one at a time.
Var reference_embeddings(const ConditionalNetwork& net, const std::vector<const MelSpectrogram*>& refs, bool training) {
  const bool uniform = std::all_of(refs.begin(), refs.end(), [&](const MelSpectrogram* m) {
    return m->frames == refs.front()->frames && m->n_mels == refs.front()->n_mels;
  });
  if (uniform) return net.reference_embeddings(spectrogram_batch(refs), training);
  std::vector<Var> rows;
  for (const auto* r : refs) rows.push_back(net.reference_embeddings(spectrogram_input(*r), training));
  return ad::concat(rows, 0);
}

std::vector<double> frame_targets(const LoadedClip& clip, std::size_t frames) {
  return render_frame_labels(events_of_class(clip.record.events, clip.record.target_class), clip.duration, frames).values;
}

Var clip_loss(const Var& scores, std::span<const double> labels, const ClassId& cls, const TrainConfig& cfg,
              const DurationStats& stats) {
  switch (cfg.loss) {
    case LossKind::bce:
      return bce_loss(scores, labels);
    case LossKind::focal:
      return focal_loss(scores, labels, cfg.focal);
    case LossKind::du_focal:
      return du_focal_loss(scores, labels, cls, stats, cfg.focal, cfg.duration);
  }
  throw std::logic_error("unhandled loss kind");
}

void append_jsonl(const std::filesystem::path& path, const json& line) {
  std::ofstream out(path, std::ios::app);
  out << line.dump() << '\n';
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::bce:
      return "bce";
    case LossKind::focal:
      return "focal";
    case LossKind::du_focal:
      return "du_focal";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "bce") return LossKind::bce;
  if (name == "focal") return LossKind::focal;
  if (name == "du_focal") return LossKind::du_focal;
  throw std::invalid_argument("unknown loss '" + name + "' (expected bce, focal or du_focal)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  focal.validate();
  duration.validate();
}

void ScoreCache::put(const std::string& sample_id, std::size_t epoch, std::vector<double> scores) {
  std::unique_lock lock(mutex_);
  entries_[sample_id] = Entry{epoch, std::move(scores)};
}

std::optional<ScoreCache::Entry> ScoreCache::previous(const std::string& sample_id, std::size_t epoch) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(sample_id);
  if (it == entries_.end() || it->second.epoch >= epoch) return std::nullopt;
  return it->second;
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

ClipSet load_clips(const DatasetManifest& manifest, const std::string& split, const MelConfig& mel) {
  ClipSet set;
  for (const auto& rec : manifest.split(split)) {
    try {
      LoadedClip clip;
      clip.record = rec;
      const AudioClip audio = load_audio(manifest.root / rec.mixture_path);
      validate_clip(audio);
      clip.mixture = extract_logmel(audio, mel);
      clip.duration = audio.duration();
      clip.reference_key = rec.reference_path;
      if (!set.references.contains(rec.reference_path)) {
        const AudioClip ref = load_audio(manifest.root / rec.reference_path);
        validate_clip(ref);
        set.references.emplace(rec.reference_path, extract_logmel(ref, mel));
      }
      set.clips.push_back(std::move(clip));
    } catch (const std::exception& e) {
      set.errors.push_back({rec.sample_id, e.what()});
    }
  }
  return set;
}

TrainResult train(RadurModel& model, const TrainInputs& inputs, const TrainConfig& cfg, const EvalConfig& eval,
                  const std::filesystem::path& run_dir, const json& run_config, const TrainHooks& hooks) {
  cfg.validate();
  if (!inputs.train || inputs.train->clips.empty()) throw std::invalid_argument("training split is empty");
  if (cfg.loss == LossKind::du_focal) {
    for (const auto& c : inputs.train->clips) class_duration(inputs.stats, c.record.target_class);
  }
  const auto& clips = inputs.train->clips;
  const bool write = !run_dir.empty();
  const auto log_path = run_dir / "metrics.jsonl";
  if (write) {
    std::filesystem::create_directories(run_dir);
    std::ofstream(log_path, std::ios::trunc);
  }

  Adam optimizer(model.store, cfg.lr);
  ScoreCache cache;
  TrainResult result;
  CheckpointMeta meta;
  meta.run_config = run_config;
  meta.duration_stats = inputs.stats;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const bool ee = cfg.enhancement_active(epoch);
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const LoadedClip*> batch;
      std::vector<const MelSpectrogram*> mixtures, references;
      for (std::size_t i = start; i < end; ++i) {
        const auto& c = clips[order[i]];
        batch.push_back(&c);
        mixtures.push_back(&c.mixture);
        references.push_back(&inputs.train->reference(c));
      }
      const Var x = batch_of(mixtures, "mixtures");

      std::vector<std::optional<std::vector<double>>> cached(batch.size());
      std::vector<std::optional<std::size_t>> stamps(batch.size());
      if (ee) {
        for (std::size_t n = 0; n < batch.size(); ++n) {
          if (auto entry = cache.previous(batch[n]->record.sample_id, epoch)) {
            stamps[n] = entry->epoch;
            cached[n] = std::move(entry->scores);
          }
        }
      }
      if (hooks.on_batch) hooks.on_batch(epoch, batches, stamps);

      model.store.zero_grad();
      Var embeddings = reference_embeddings(model.conditional, references, true);
      if (std::any_of(cached.begin(), cached.end(), [](const auto& c) { return c.has_value(); })) {
        const Var mixture_features = model.conditional.encoder().forward(x, true);
        embeddings = model.conditional.enhance_batch(embeddings, mixture_features, cached);
      }
      const Var scores = model.detector.forward(x, embeddings, true);  // [N, t']
      const std::size_t frames = scores.dim(1);

      std::vector<Var> losses;
      std::vector<double> per_clip;
      for (std::size_t n = 0; n < batch.size(); ++n) {
        const auto labels = frame_targets(*batch[n], frames);
        losses.push_back(clip_loss(ad::take(scores, 0, n), labels, batch[n]->record.target_class, cfg, inputs.stats));
        per_clip.push_back(losses.back().item());
      }
      const Var loss = ad::mean(ad::concat(losses, 0));
      const double value = loss.item();
      if (!std::isfinite(value) || !all_finite(scores.value())) {
        if (write) {
          json dump = {{"epoch", epoch}, {"batch", batches}, {"loss", std::isfinite(value) ? json(value) : json("nan")}};
          json items = json::array();
          for (std::size_t n = 0; n < batch.size(); ++n) {
            items.push_back({{"sample_id", batch[n]->record.sample_id},
                             {"target_class", batch[n]->record.target_class},
                             {"loss", std::isfinite(per_clip[n]) ? json(per_clip[n]) : json("nan")},
                             {"cached_epoch", stamps[n] ? json(*stamps[n]) : json(nullptr)}});
          }
          dump["clips"] = items;
          std::ofstream(run_dir / "nan_batch.json") << dump.dump(2) << '\n';
        }
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      ad::backward(loss);
      optimizer.step();
      if (hooks.on_step) hooks.on_step(epoch, batches, value);

      // Scores from this forward pass serve the next epoch.
      for (std::size_t n = 0; n < batch.size(); ++n) {
        const auto row = scores.value().subspan(n * frames, frames);
        cache.put(batch[n]->record.sample_id, epoch, std::vector<double>(row.begin(), row.end()));
      }
      loss_sum += value;
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);
    log.ee_active = ee;
    meta.epoch = epoch + 1;
    meta.ee_trained = ee;
    if (write) {
      append_jsonl(log_path, {{"epoch", epoch}, {"split", "train"}, {"loss", log.train_loss}, {"ee_active", ee}});
    }
    if (inputs.val && !inputs.val->clips.empty()) {
      EvalConfig vcfg = eval;
      vcfg.two_pass = cfg.validate_two_pass;
      const auto report = evaluate(model, *inputs.val, vcfg, ee);
      log.val_loss = report.mean_loss;
      log.val_segment_f = report.segment.macro_f();
      log.val_event_f = report.event.macro_f();
      log.two_pass = report.two_pass_used;
      if (write) {
        append_jsonl(log_path, {{"epoch", epoch},
                                {"split", "val"},
                                {"loss", log.val_loss},
                                {"segment_f", log.val_segment_f},
                                {"event_f", log.val_event_f},
                                {"two_pass", log.two_pass}});
      }
      if (log.val_segment_f > result.best_val_segment_f) {
        result.best_val_segment_f = log.val_segment_f;
        result.best_epoch = epoch;
        if (write) {
          result.best_checkpoint = run_dir / "best.ckpt";
          save_checkpoint(result.best_checkpoint, model, &optimizer, meta);
        }
      }
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(log);
  }
  if (write) {
    result.last_checkpoint = run_dir / "last.ckpt";
    save_checkpoint(result.last_checkpoint, model, &optimizer, meta);
    if (result.best_checkpoint.empty()) result.best_checkpoint = result.last_checkpoint;
  }
  return result;
}

EvaluationReport report_from_scores(const std::vector<ScoredRecord>& records, const EvalConfig& cfg,
                                    const DurationStats& stats) {
  cfg.decoding.validate();
  EvaluationReport report;
  double loss_sum = 0.0;
  for (const auto& rec : records) {
    const ClassId& target = rec.record.target_class;
    ClipOutcome out;
    out.sample_id = rec.record.sample_id;
    out.target_class = target;
    out.is_negative = rec.record.is_negative;
    out.detected = decode_events(rec.scores.values, rec.scores.frame_resolution, cfg.decoding, target);
    const EventList truth = events_of_class(rec.record.events, target);
    FScoreReport seg = segment_f(truth, out.detected, rec.duration, cfg.segment);
    FScoreReport evt = event_f(truth, out.detected, cfg.event);
    seg.touch(target);
    evt.touch(target);
    report.segment.merge(seg);
    report.event.merge(evt);
    const auto labels = render_frame_labels(truth, rec.duration, rec.scores.values.size()).values;
    loss_sum += bce_loss(rec.scores.values, labels);
    out.scores = rec.scores;
    report.clips.push_back(std::move(out));
  }
  if (!report.clips.empty()) report.mean_loss = loss_sum / static_cast<double>(report.clips.size());
  if (!stats.empty()) {
    report.segment_buckets = duration_bucket_report(report.segment, stats);
    report.event_buckets = duration_bucket_report(report.event, stats);
  }
  return report;
}

EvaluationReport evaluate(const RadurModel& model, const ClipSet& clips, const EvalConfig& cfg, bool ee_trained,
                          const DurationStats& stats) {
  cfg.decoding.validate();
  std::vector<ScoredRecord> scored;
  std::vector<RecordError> errors = clips.errors;
  const bool two_pass = cfg.two_pass && ee_trained;
  for (const auto& clip : clips.clips) {
    try {
      const auto& ref_mel = clips.reference(clip);
      FrameScores scores = model.detect(clip.mixture, ref_mel);
      if (two_pass) scores = model.detect(clip.mixture, ref_mel, &scores.values);
      scored.push_back({clip.record, clip.duration, std::move(scores)});
    } catch (const std::exception& e) {
      errors.push_back({clip.record.sample_id, e.what()});
    }
  }
  EvaluationReport report = report_from_scores(scored, cfg, stats);
  report.errors = std::move(errors);
  report.two_pass_used = two_pass;
  return report;
}

namespace {

json counts_json(const FScoreReport& r) {
  json classes = json::object();
  for (const auto& [label, c] : r.classes) {
    classes[label] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"precision", c.precision()},
                      {"recall", c.recall()}, {"f", c.f()}};
  }
  return {{"macro_f", r.macro_f()},
          {"macro_precision", r.macro_precision()},
          {"macro_recall", r.macro_recall()},
          {"classes", classes}};
}

json buckets_json(const std::vector<BucketRow>& rows) {
  json out = json::array();
  for (const auto& b : rows) {
    out.push_back({{"lower", b.lower},
                   {"upper", b.upper},
                   {"classes", b.classes},
                   {"macro_f", b.macro_f ? json(*b.macro_f) : json(nullptr)}});
  }
  return out;
}

}  // namespace

json report_to_json(const EvaluationReport& report) {
  json errors = json::array();
  for (const auto& e : report.errors) errors.push_back({{"sample_id", e.sample_id}, {"error", e.message}});
  return {{"segment", counts_json(report.segment)},
          {"event", counts_json(report.event)},
          {"segment_buckets", buckets_json(report.segment_buckets)},
          {"event_buckets", buckets_json(report.event_buckets)},
          {"two_pass", report.two_pass_used},
          {"clips", report.clips.size()},
          {"errors", errors}};
}

}  // namespace radur

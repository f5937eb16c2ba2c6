#include "radur/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>

namespace radur {

namespace {

constexpr double kTimeEps = 1e-9;

std::set<ClassId> labels_of(const EventList& a, const EventList& b) {
  std::set<ClassId> out;
  for (const auto& e : a) out.insert(e.label);
  for (const auto& e : b) out.insert(e.label);
  return out;
}

}  // namespace

void DecodingConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("decoding threshold must lie in (0, 1)");
  if (median_window == 0 || median_window % 2 == 0) throw std::invalid_argument("median window must be odd and >= 1");
}

std::vector<double> median_filter(std::span<const double> scores, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw std::invalid_argument("median window must be odd and >= 1");
  const std::size_t n = scores.size();
  if (window == 1 || n == 0) return {scores.begin(), scores.end()};
  const long half = static_cast<long>(window / 2);
  std::vector<double> out(n), buf(window);
  for (std::size_t i = 0; i < n; ++i) {
    for (long j = -half; j <= half; ++j) {
      const long idx = std::clamp(static_cast<long>(i) + j, 0L, static_cast<long>(n) - 1);
      buf[static_cast<std::size_t>(j + half)] = scores[static_cast<std::size_t>(idx)];
    }
    std::nth_element(buf.begin(), buf.begin() + half, buf.end());
    out[i] = buf[static_cast<std::size_t>(half)];
  }
  return out;
}

EventList decode_events(std::span<const double> scores, double frame_resolution, const DecodingConfig& cfg,
                        const ClassId& label) {
  cfg.validate();
  const auto smooth = median_filter(scores, cfg.median_window);
  EventList out;
  std::size_t i = 0;
  while (i < smooth.size()) {
    if (smooth[i] < cfg.threshold) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < smooth.size() && smooth[j] >= cfg.threshold) ++j;
    out.push_back({static_cast<double>(i) * frame_resolution, static_cast<double>(j) * frame_resolution, label});
    i = j;
  }
  return out;
}

double ClassCounts::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double ClassCounts::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double ClassCounts::f() const {
  const double p = precision(), r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

namespace {

double macro(const FScoreReport& r, double (ClassCounts::*metric)() const) {
  if (r.classes.empty()) return 0.0;
  double s = 0;
  for (const auto& [_, c] : r.classes) s += (c.*metric)();
  return s / static_cast<double>(r.classes.size());
}

}  // namespace

double FScoreReport::macro_f() const { return macro(*this, &ClassCounts::f); }
double FScoreReport::macro_precision() const { return macro(*this, &ClassCounts::precision); }
double FScoreReport::macro_recall() const { return macro(*this, &ClassCounts::recall); }

void FScoreReport::merge(const FScoreReport& other) {
  for (const auto& [label, c] : other.classes) {
    auto& mine = classes[label];
    mine.tp += c.tp;
    mine.fp += c.fp;
    mine.fn += c.fn;
  }
}

FScoreReport segment_f(const EventList& ref, const EventList& hyp, double clip_duration, const SegmentConfig& cfg) {
  if (!(cfg.segment > 0)) throw std::invalid_argument("segment length must be positive");
  if (!(clip_duration > 0)) throw std::invalid_argument("clip duration must be positive");
  const auto n_segments = static_cast<std::size_t>(std::ceil(clip_duration / cfg.segment - kTimeEps));
  auto activity = [&](const EventList& events, const ClassId& label) {
    std::vector<bool> active(n_segments, false);
    for (const auto& e : events) {
      if (e.label != label || !(e.offset > e.onset)) continue;
      const double first = std::floor(e.onset / cfg.segment + kTimeEps);
      const double last = std::floor(e.offset / cfg.segment + kTimeEps);
      for (double s = std::max(0.0, first); s <= last && s < static_cast<double>(n_segments); s += 1.0) {
        active[static_cast<std::size_t>(s)] = true;
      }
    }
    return active;
  };
  FScoreReport report;
  for (const auto& label : labels_of(ref, hyp)) {
    const auto r = activity(ref, label);
    const auto h = activity(hyp, label);
    auto& c = report.classes[label];
    for (std::size_t s = 0; s < n_segments; ++s) {
      c.tp += r[s] && h[s];
      c.fp += !r[s] && h[s];
      c.fn += r[s] && !h[s];
    }
  }
  return report;
}

bool events_match(const Event& ref, const Event& hyp, const EventConfig& cfg) {
  const double offset_tol = std::max(cfg.collar, cfg.offset_ratio * ref.duration());
  return std::abs(hyp.onset - ref.onset) <= cfg.collar + kTimeEps &&
         std::abs(hyp.offset - ref.offset) <= offset_tol + kTimeEps;
}

FScoreReport event_f(const EventList& ref, const EventList& hyp, const EventConfig& cfg) {
  FScoreReport report;
  for (const auto& label : labels_of(ref, hyp)) {
    const auto refs = events_of_class(ref, label);
    const auto hyps = events_of_class(hyp, label);
    std::vector<std::vector<std::size_t>> candidates(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i)
      for (std::size_t j = 0; j < hyps.size(); ++j)
        if (events_match(refs[i], hyps[j], cfg)) candidates[i].push_back(j);

    std::vector<long> owner(hyps.size(), -1);
    std::vector<char> seen;
    std::function<bool(std::size_t)> assign = [&](std::size_t i) {
      for (std::size_t j : candidates[i]) {
        if (seen[j]) continue;
        seen[j] = 1;
        if (owner[j] < 0 || assign(static_cast<std::size_t>(owner[j]))) {
          owner[j] = static_cast<long>(i);
          return true;
        }
      }
      return false;
    };
    std::size_t matched = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      seen.assign(hyps.size(), 0);
      matched += assign(i);
    }
    auto& c = report.classes[label];
    c.tp = matched;
    c.fp = hyps.size() - matched;
    c.fn = refs.size() - matched;
  }
  return report;
}

std::vector<BucketRow> duration_bucket_report(const FScoreReport& report, const DurationStats& stats,
                                              const std::vector<double>& boundaries) {
  if (boundaries.size() < 2 || !std::is_sorted(boundaries.begin(), boundaries.end())) {
    throw std::invalid_argument("bucket boundaries must be ascending with at least two entries");
  }
  std::vector<BucketRow> rows(boundaries.size() - 1);
  std::vector<double> sums(rows.size(), 0.0);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    rows[b].lower = boundaries[b];
    rows[b].upper = boundaries[b + 1];
  }
  for (const auto& [label, counts] : report.classes) {
    const double w = class_duration(stats, label);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const bool last = b + 1 == rows.size();
      if (w >= rows[b].lower && (w < rows[b].upper || (last && w <= rows[b].upper))) {
        rows[b].classes.push_back(label);
        sums[b] += counts.f();
        break;
      }
    }
  }
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (!rows[b].classes.empty()) rows[b].macro_f = sums[b] / static_cast<double>(rows[b].classes.size());
  }
  return rows;
}

}  // namespace radur

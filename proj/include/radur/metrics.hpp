#pragma once

// Score decoding and the segment- and event-based F-measures, aggregated per
// class over a corpus and macro-averaged across classes.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radur/events.hpp"
#include "radur/losses.hpp"

namespace radur {

struct DecodingConfig {
  double threshold = 0.5;
  std::size_t median_window = 5;

  void validate() const;
};

/// Median filter with edge replication; window must be odd.
std::vector<double> median_filter(std::span<const double> scores, std::size_t window);

/// Median-filters, thresholds (score >= threshold) and merges runs of active
/// frames into events with frame-resolution boundaries.
EventList decode_events(std::span<const double> scores, double frame_resolution, const DecodingConfig& cfg,
                        const ClassId& label = {});

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const;
  double recall() const;
  double f() const;
};

struct FScoreReport {
  std::map<ClassId, ClassCounts> classes;

  /// Unweighted mean of per-class F; 0 for an empty report.
  double macro_f() const;
  double macro_precision() const;
  double macro_recall() const;
  /// Adds counts class by class.
  void merge(const FScoreReport& other);
  /// Makes sure `label` has an entry, even with zero counts.
  void touch(const ClassId& label) { classes[label]; }
};

struct SegmentConfig {
  double segment = 1.0;
};

struct EventConfig {
  double collar = 0.2;
  double offset_ratio = 0.2;
};

/// Segment s ([s*len, (s+1)*len)) is active for a class when an event with
/// onset < (s+1)*len and offset >= s*len exists.
FScoreReport segment_f(const EventList& ref, const EventList& hyp, double clip_duration,
                       const SegmentConfig& cfg = {});

/// True when `hyp` lies within the onset collar and offset tolerance of `ref`.
bool events_match(const Event& ref, const Event& hyp, const EventConfig& cfg);

/// One-to-one matching per class. References are visited in onset order and
/// take the earliest compatible hypothesis, re-routing earlier assignments
/// along augmenting paths so the match count is maximal.
FScoreReport event_f(const EventList& ref, const EventList& hyp, const EventConfig& cfg = {});

struct BucketRow {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<ClassId> classes;
  std::optional<double> macro_f;  // absent for empty buckets
};

inline const std::vector<double> kDefaultDurationBuckets{0.0, 1.0, 3.0, 5.0, 7.0, 10.0};

/// Groups classes by mean duration into [b0, b1), ..., [b_{n-1}, b_n].
std::vector<BucketRow> duration_bucket_report(const FScoreReport& report, const DurationStats& stats,
                                              const std::vector<double>& boundaries = kDefaultDurationBuckets);

}  // namespace radur

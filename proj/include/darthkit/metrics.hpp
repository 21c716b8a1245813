#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "darthkit/dataset.hpp"
#include "darthkit/errors.hpp"
#include "darthkit/tensor.hpp"

namespace darthkit {

inline constexpr int kNumHotaAlphas = 19;  // 0.05, 0.10, ..., 0.95
double hota_alpha(int index) noexcept;

/// Per-frame evaluation input: dense ids and the gt x pred IoU matrix. Ground
/// truth with confidence 0 is an ignore region: predictions matched to it
/// (IoU >= 0.5) are removed together with the region itself.
struct FrameData {
  std::vector<int> gt_ids;
  std::vector<int> pred_ids;
  Matrix similarity;
};

struct SequenceData {
  int num_gt_ids = 0;
  int num_pred_ids = 0;
  std::vector<FrameData> frames;
};

/// Only rows of `class_id` are used (all rows when class_id == 0).
SequenceData prepare_sequence(const SequenceTracks& gt, const SequenceTracks& pred, int class_id = 0);

struct ClearCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, idsw = 0, frag = 0;
  double motp_sum = 0.0;
};

struct IdentityCounts {
  double idtp = 0.0, idfp = 0.0, idfn = 0.0;
};

struct HotaCounts {
  std::array<double, kNumHotaAlphas> tp{}, fn{}, fp{};
  std::array<double, kNumHotaAlphas> assa_tp{};  // AssA_alpha * TP_alpha, summable
  std::array<double, kNumHotaAlphas> loca_sum{};
};

struct MetricCounts {
  ClearCounts clear;
  IdentityCounts identity;
  HotaCounts hota;

  void add(const MetricCounts& other);
  std::int64_t num_gt() const noexcept { return clear.tp + clear.fn; }
  bool empty() const noexcept { return clear.tp + clear.fn + clear.fp == 0; }
};

/// Fractions in [0,1] (MOTA unbounded below). `defined` is false when there
/// is no ground truth; the values are then NaN.
struct MetricValues {
  double deta = 0.0, mota = 0.0, hota = 0.0, idf1 = 0.0, assa = 0.0;
  bool defined = true;
  std::int64_t tp = 0, fp = 0, fn = 0, idsw = 0;
};

ClearCounts clear_counts(const SequenceData& d, double iou_thr = 0.5);
IdentityCounts identity_counts(const SequenceData& d, double iou_thr = 0.5);
HotaCounts hota_counts(const SequenceData& d);
MetricCounts evaluate_counts(const SequenceData& d);
MetricValues finalize(const MetricCounts& c);

struct ClearResult {
  double mota = 0.0;
  std::int64_t idsw = 0, fp = 0, fn = 0, tp = 0;
  bool defined = true;
};
struct HotaResult {
  double hota = 0.0, deta = 0.0, assa = 0.0;
  bool defined = true;
};

/// Single-sequence, class-agnostic entry points.
ClearResult clear_mot(const SequenceTracks& gt, const SequenceTracks& pred, double iou_thr = 0.5);
double idf1(const SequenceTracks& gt, const SequenceTracks& pred, double iou_thr = 0.5);
HotaResult hota(const SequenceTracks& gt, const SequenceTracks& pred);

struct ClassReport {
  int class_id = 0;
  MetricCounts counts;
  MetricValues values;
};

struct SequenceReport {
  std::string name;
  std::vector<ClassReport> classes;
  MetricValues average;
  MetricValues overall;
};

struct MetricsReport {
  std::vector<int> class_ids;
  std::vector<SequenceReport> sequences;
  std::vector<ClassReport> classes;  // pooled over sequences
  MetricValues average;              // unweighted mean over classes
  MetricValues overall;              // pooled counts over classes

  /// JSON document; metric values scaled by 100, undefined values as null.
  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

enum class AggregateMode { kAverage, kOverall };

/// Combines per-class reports. Classes without any gt or prediction are left
/// out of the average.
MetricValues aggregate(const std::vector<ClassReport>& reports, AggregateMode mode);

/// Thrown when gt and prediction cover different sequence sets.
class SequenceMismatch : public Error {
 public:
  using Error::Error;
};

/// Evaluates every sequence of `gt` against the same-named prediction
/// sequence, per class in `class_ids` (all gt classes when empty).
MetricsReport evaluate(const TrackingResult& gt, const TrackingResult& pred,
                       std::vector<int> class_ids = {});

}  // namespace darthkit

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "darthkit/geometry.hpp"
#include "darthkit/rng.hpp"

namespace darthkit {

enum class ViewKind { kStudent, kContrastive };
enum class Polarity { kPositive, kNegative, kIgnore };

struct AssignedRoI {
  BoundingBox box;
  ViewKind view = ViewKind::kStudent;
  int assigned_det = -1;  // set for positives only
  Polarity polarity = Polarity::kNegative;
  double max_iou = 0.0;

  friend bool operator==(const AssignedRoI&, const AssignedRoI&) = default;
};

using PairLabels = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MatchTable {
  std::vector<AssignedRoI> student_samples;      // V, all positive
  std::vector<AssignedRoI> contrastive_targets;  // K, positives and negatives
  PairLabels pair_labels;                        // V x K

  bool empty() const noexcept { return student_samples.empty(); }
};

struct MatchingConfig {
  double pos_iou = 0.7;  // alpha_1
  double neg_iou = 0.3;  // alpha_2
  int student_samples = 32;
  int contrastive_samples = 64;
  double pos_neg_ratio = 1.0;
};

/// Keeps detections with confidence >= gamma, preserving order.
std::vector<Detection> filter_detections(std::span<const Detection> dets, double gamma);

std::vector<AssignedRoI> assign_rois(std::span<const BoundingBox> rois,
                                     std::span<const BoundingBox> dets, double a1, double a2,
                                     ViewKind view = ViewKind::kStudent);

/// Student entries keep only positives; ignored contrastive RoIs are dropped;
/// student samples without any positive target are dropped.
MatchTable build_match_table(std::span<const AssignedRoI> student,
                             std::span<const AssignedRoI> contrastive);

/// Draws at most `n` non-ignored RoIs aiming at `pos_neg_ratio` positives per
/// negative. Negatives are spread evenly over max-IoU bins [0,.1), [.1,.2),
/// [.2,inf). A scarce polarity is topped up from the other one. Output keeps
/// input order.
std::vector<AssignedRoI> sample_rois(std::span<const AssignedRoI> assigned, int n,
                                     double pos_neg_ratio, KeyedRng& rng);

}  // namespace darthkit

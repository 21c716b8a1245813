#pragma once

#include <array>
#include <span>
#include <vector>

#include "darthkit/model.hpp"
#include "darthkit/rng.hpp"

namespace darthkit {

/// Minimal supervised detection objective used for source pretraining and
/// the pseudo-label baseline.
struct SupervisedConfig {
  int rpn_batch = 64;
  double rpn_pos_iou = 0.7;
  double rpn_neg_iou = 0.3;
  double rpn_pos_fraction = 0.5;
  int roi_batch = 64;
  double roi_pos_iou = 0.5;
  double roi_pos_fraction = 0.25;
};

struct DetectionTargets {
  std::vector<int> anchor_labels;   // 1 positive, 0 negative, -1 unused
  std::vector<std::array<double, 4>> anchor_deltas;  // valid where label == 1
  std::vector<BoundingBox> rois;
  std::vector<int> roi_labels;      // 0 background, else class id
  std::vector<std::array<double, 4>> roi_deltas;     // valid where label > 0
};

struct DetectionLoss {
  double rpn_cls = 0.0;
  double rpn_reg = 0.0;
  double roi_cls = 0.0;
  double roi_reg = 0.0;

  double total() const noexcept { return rpn_cls + rpn_reg + roi_cls + roi_reg; }
};

/// Anchor labels (best anchor per box forced positive), plus RoIs sampled
/// from the model's proposals together with the ground truth boxes.
DetectionTargets build_detection_targets(const Detector& det, const Encoded& enc,
                                         std::span<const BoundingBox> gt,
                                         const SupervisedConfig& cfg, KeyedRng& rng);

/// BCE + smooth-L1 on anchors, softmax CE + smooth-L1 on RoIs. `heads` must
/// be evaluated on `targets.rois`. Writes output gradients into `grads`.
DetectionLoss detection_loss(const Encoded& enc, const RoiHeadOutputs& heads,
                             const DetectionTargets& targets, OutputGrads& grads);

}  // namespace darthkit

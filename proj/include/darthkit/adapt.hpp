#pragma once

#include <cstdint>
#include <ostream>

#include "darthkit/dataset.hpp"
#include "darthkit/losses.hpp"
#include "darthkit/matching.hpp"
#include "darthkit/model.hpp"
#include "darthkit/supervised.hpp"
#include "darthkit/views.hpp"

namespace darthkit {

/// Returns the global gradient norm before clipping; scales `grads` in place
/// so the norm does not exceed `max_norm` (no-op when max_norm <= 0).
double clip_grad_norm(ModelWeights& grads, double max_norm);

/// SGD with optional momentum and weight decay; `velocity` may be empty when
/// momentum is zero.
void sgd_update(ModelWeights& weights, const ModelWeights& grads, ModelWeights& velocity,
                double lr, double momentum, double weight_decay = 0.0);

/// Step-decayed learning rate: lr * factor^(epoch / decay_step), no decay
/// when decay_step <= 0.
double step_lr(double lr, int epoch, int decay_step, double factor);

struct PretrainConfig {
  int epochs = 12;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double grad_clip_norm = 35.0;
  int lr_decay_step = 9;
  double lr_decay_factor = 0.1;
  int ref_window = 3;  // reference frame drawn within +-ref_window of the key frame
  LossWeights track_weights{0.25, 1.0, 0.0, 0.0};
  SupervisedConfig supervised;
  MatchingConfig matching;
  AugConfig aug = default_aug();
  std::uint64_t seed = 0;

  static AugConfig default_aug();
};

struct AdaptConfig {
  double tau = 0.998;
  double gamma_conf = 0.7;
  double lr = 0.001;
  double momentum = 0.0;
  double grad_clip_norm = 35.0;
  int epochs = 1;
  int lr_decay_step = 0;
  double lr_decay_factor = 0.1;
  double epsilon = 0.1;
  // Compare RPN objectness through a sigmoid instead of as raw logits.
  bool dc_rpn_probabilities = true;
  // Compare RoI class scores as softmax probabilities instead of centred logits.
  bool dc_roi_probabilities = true;
  LossWeights gammas;
  MatchingConfig matching;
  AugConfig aug;
  DetectConfig teacher_detect;
  SupervisedConfig supervised;  // used by the pseudo-label baseline
  std::uint64_t seed = 0;
};

struct AdaptState {
  ModelWeights student;
  ModelWeights teacher;
  ModelWeights velocity;
  std::int64_t step = 0;
  double tau = 0.998;
  double lr = 0.001;
  AdaptConfig config;
};

struct StepStats {
  LossBreakdown losses;
  double grad_norm = 0.0;       // before clipping
  double clipped_norm = 0.0;    // after clipping
  int teacher_detections = 0;   // after confidence filtering
  int pcl_anchors = 0;
};

AdaptState init_adapt_state(const ModelWeights& source, const AdaptConfig& cfg);

/// One self-supervised step on a single target frame: views, teacher
/// detections, matching, losses, clipped student update, EMA teacher update.
StepStats adapt_step(const Detector& det, AdaptState& state, const Image& frame, std::uint64_t seed);

/// Shuffled passes over all target frames. Writes one JSON line per step to
/// `log` when given. Returns the final student weights.
ModelWeights adapt_run(const Detector& det, const ModelWeights& source, const VideoSet& target,
                       const AdaptConfig& cfg, std::ostream* log = nullptr);

/// Supervised detection plus key/reference embedding training on labeled
/// source sequences, starting from `init`.
ModelWeights pretrain_source(const Detector& det, const ModelWeights& init,
                             const LabeledVideoSet& source, const PretrainConfig& cfg,
                             std::ostream* log = nullptr);

/// Pseudo-label self-training: the frozen source model labels each view at
/// `conf_thr` and the student is trained on those labels with the detection
/// objective only. Frames without pseudo-labels are skipped.
ModelWeights sfod_baseline(const Detector& det, const ModelWeights& source, const VideoSet& target,
                           double conf_thr, const AdaptConfig& cfg, std::ostream* log = nullptr);

}  // namespace darthkit

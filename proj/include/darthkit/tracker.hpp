#pragma once

#include <span>
#include <utility>
#include <vector>

#include "darthkit/dataset.hpp"
#include "darthkit/model.hpp"

namespace darthkit {

struct TrackerConfig {
  double match_score_thr = 0.5;
  double init_conf_thr = 0.8;
  int max_age = 10;
  double embed_momentum = 0.8;  // weight of the stored embedding in the update
  double temperature = 0.1;     // divides cosine similarities before the softmaxes
  bool hungarian = false;
  DetectConfig detect;
};

struct Track {
  int track_id = 0;
  BoundingBox last_box;
  Vector embedding;
  int last_seen_frame = 0;
  int age = 0;
};

struct Association {
  std::vector<std::pair<int, int>> matches;  // (track index, detection index)
  std::vector<int> births;                   // detection indices
  std::vector<int> deaths;                   // track indices
  Matrix scores;                             // tracks x detections
};

/// Bi-softmax similarity: the mean of a softmax over tracks per detection and
/// a softmax over detections per track, on cosine similarity / temperature.
/// Pairs of different classes score 0.
Matrix bisoftmax_scores(std::span<const Track> tracks, std::span<const Detection> dets,
                        const Matrix& det_embeds, double temperature);

Association associate(std::span<const Track> tracks, std::span<const Detection> dets,
                      const Matrix& det_embeds, int frame, const TrackerConfig& cfg);

/// Per-sequence association state machine.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}) : cfg_(std::move(cfg)) {}

  /// `frame` is 1-based. Returns the rows emitted for this frame.
  std::vector<TrackRow> step(int frame, std::span<const Detection> dets, const Matrix& det_embeds);
  const std::vector<Track>& tracks() const noexcept { return tracks_; }

 private:
  TrackerConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
};

TrackingResult track_sequence(const Detector& det, const ModelWeights& weights, const VideoSet& frames,
                              const TrackerConfig& cfg);

}  // namespace darthkit

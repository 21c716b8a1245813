#pragma once

#include <string>
#include <vector>

#include "darthkit/geometry.hpp"
#include "darthkit/image.hpp"

namespace darthkit {

/// One row of a tracking result or ground truth. `frame` is 1-based;
/// `box.confidence` doubles as the ground-truth ignore flag (0 = ignore).
struct TrackRow {
  int frame = 1;
  int track_id = 0;
  BoundingBox box;

  friend bool operator==(const TrackRow&, const TrackRow&) = default;
};

struct SequenceTracks {
  std::string name;
  int num_frames = 0;
  std::vector<TrackRow> rows;  // sorted by (frame, track_id)

  friend bool operator==(const SequenceTracks&, const SequenceTracks&) = default;
};

struct TrackingResult {
  std::vector<SequenceTracks> sequences;

  const SequenceTracks* find(const std::string& name) const;
  friend bool operator==(const TrackingResult&, const TrackingResult&) = default;
};

struct VideoSequence {
  std::string name;
  std::vector<Image> frames;
};

/// Unlabeled frames. Adaptation consumes only this type, so target
/// annotations cannot reach it.
struct VideoSet {
  std::vector<VideoSequence> sequences;

  std::size_t num_frames() const noexcept;
};

struct LabeledVideoSet {
  VideoSet videos;
  TrackingResult gt;  // one SequenceTracks per video, same order
};

/// Boxes of frame `frame` (1-based) of a sequence's rows.
std::vector<TrackRow> rows_at(const SequenceTracks& seq, int frame);

}  // namespace darthkit

#include "darthkit/dataset.hpp"

#include <algorithm>

namespace darthkit {

const SequenceTracks* TrackingResult::find(const std::string& name) const {
  for (const auto& s : sequences)
    if (s.name == name) return &s;
  return nullptr;
}

std::size_t VideoSet::num_frames() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.frames.size();
  return n;
}

std::vector<TrackRow> rows_at(const SequenceTracks& seq, int frame) {
  std::vector<TrackRow> out;
  auto it = std::lower_bound(seq.rows.begin(), seq.rows.end(), frame,
                             [](const TrackRow& r, int f) { return r.frame < f; });
  for (; it != seq.rows.end() && it->frame == frame; ++it) out.push_back(*it);
  return out;
}

}  // namespace darthkit

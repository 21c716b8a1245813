#include "darthkit/matching.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "darthkit/errors.hpp"

namespace darthkit {

std::vector<Detection> filter_detections(std::span<const Detection> dets, double gamma) {
  std::vector<Detection> out;
  for (const auto& d : dets)
    if (d.confidence >= gamma) out.push_back(d);
  return out;
}

std::vector<AssignedRoI> assign_rois(std::span<const BoundingBox> rois,
                                     std::span<const BoundingBox> dets, double a1, double a2,
                                     ViewKind view) {
  if (a2 > a1) throw ConfigError("matching.neg_iou", "negative IoU threshold exceeds positive threshold");
  std::vector<AssignedRoI> out;
  out.reserve(rois.size());
  for (const auto& roi : rois) {
    AssignedRoI a;
    a.box = roi;
    a.view = view;
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t j = 0; j < dets.size(); ++j) {
      const double v = iou(roi, dets[j]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    a.max_iou = std::max(best_iou, 0.0);
    if (best >= 0 && best_iou >= a1) {
      a.polarity = Polarity::kPositive;
      a.assigned_det = best;
    } else if (a.max_iou < a2) {
      a.polarity = Polarity::kNegative;
    } else {
      a.polarity = Polarity::kIgnore;
    }
    out.push_back(a);
  }
  return out;
}

MatchTable build_match_table(std::span<const AssignedRoI> student,
                             std::span<const AssignedRoI> contrastive) {
  MatchTable t;
  for (const auto& c : contrastive)
    if (c.polarity != Polarity::kIgnore) t.contrastive_targets.push_back(c);

  for (const auto& s : student) {
    if (s.polarity != Polarity::kPositive) continue;
    const bool has_target = std::any_of(t.contrastive_targets.begin(), t.contrastive_targets.end(),
                                        [&](const AssignedRoI& c) {
                                          return c.polarity == Polarity::kPositive &&
                                                 c.assigned_det == s.assigned_det;
                                        });
    if (has_target) t.student_samples.push_back(s);
  }
  if (t.student_samples.empty()) return {};

  const auto v = static_cast<Eigen::Index>(t.student_samples.size());
  const auto k = static_cast<Eigen::Index>(t.contrastive_targets.size());
  t.pair_labels.resize(v, k);
  for (Eigen::Index i = 0; i < v; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& c = t.contrastive_targets[j];
      t.pair_labels(i, j) = c.polarity == Polarity::kPositive &&
                            c.assigned_det == t.student_samples[i].assigned_det;
    }
  }
  return t;
}

namespace {

// Uniform draw of `count` items from `pool` without replacement.
std::vector<int> draw(std::vector<int> pool, std::size_t count, KeyedRng& rng) {
  if (count >= pool.size()) return pool;
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

std::vector<AssignedRoI> sample_rois(std::span<const AssignedRoI> assigned, int n,
                                     double pos_neg_ratio, KeyedRng& rng) {
  if (n <= 0) throw ConfigError("matching.samples", "sample count must be positive");
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < assigned.size(); ++i) {
    if (assigned[i].polarity == Polarity::kPositive) pos.push_back(static_cast<int>(i));
    if (assigned[i].polarity == Polarity::kNegative) neg.push_back(static_cast<int>(i));
  }
  const auto total = static_cast<std::size_t>(n);
  const auto pos_target = static_cast<std::size_t>(std::lround(n * pos_neg_ratio / (1.0 + pos_neg_ratio)));
  std::size_t num_pos = std::min(pos.size(), pos_target);
  const std::size_t num_neg = std::min(neg.size(), total - num_pos);
  num_pos = std::min(pos.size(), total - num_neg);

  std::vector<int> chosen = draw(pos, num_pos, rng);

  // IoU-balanced negatives: equal quota per nonempty bin, remainder spread
  // over the leftovers of all bins.
  std::array<std::vector<int>, 3> bins;
  for (int i : neg) {
    const double m = assigned[i].max_iou;
    bins[m < 0.1 ? 0 : (m < 0.2 ? 1 : 2)].push_back(i);
  }
  const auto nonempty = static_cast<std::size_t>(
      std::count_if(bins.begin(), bins.end(), [](const auto& b) { return !b.empty(); }));
  std::vector<int> leftovers;
  std::size_t taken = 0;
  if (nonempty > 0) {
    const std::size_t quota = num_neg / nonempty;
    for (auto& b : bins) {
      if (b.empty()) continue;
      auto shuffled = b;
      rng.shuffle(shuffled.begin(), shuffled.end());
      const std::size_t take = std::min(quota, shuffled.size());
      chosen.insert(chosen.end(), shuffled.begin(), shuffled.begin() + take);
      leftovers.insert(leftovers.end(), shuffled.begin() + take, shuffled.end());
      taken += take;
    }
  }
  std::sort(leftovers.begin(), leftovers.end());
  auto extra = draw(leftovers, num_neg - taken, rng);
  chosen.insert(chosen.end(), extra.begin(), extra.end());

  std::sort(chosen.begin(), chosen.end());
  std::vector<AssignedRoI> out;
  out.reserve(chosen.size());
  for (int i : chosen) out.push_back(assigned[i]);
  return out;
}

}  // namespace darthkit

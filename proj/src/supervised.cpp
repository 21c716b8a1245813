#include "darthkit/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace darthkit {

namespace {

std::vector<int> draw_subset(std::vector<int> pool, std::size_t count, KeyedRng& rng) {
  if (count >= pool.size()) return pool;
  for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Smooth L1 with transition point beta; returns value and writes derivative.
double smooth_l1(double x, double beta, double& d) {
  const double ax = std::abs(x);
  if (ax < beta) {
    d = x / beta;
    return 0.5 * x * x / beta;
  }
  d = x > 0 ? 1.0 : -1.0;
  return ax - 0.5 * beta;
}

constexpr double kRpnBeta = 1.0 / 9.0;
constexpr double kRoiBeta = 1.0;

}  // namespace

DetectionTargets build_detection_targets(const Detector& det, const Encoded& enc,
                                         std::span<const BoundingBox> gt,
                                         const SupervisedConfig& cfg, KeyedRng& rng) {
  DetectionTargets t;
  const auto& anchors = enc.anchors;
  const int n = static_cast<int>(anchors.size());
  const int g = static_cast<int>(gt.size());

  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best(g, 0.0);
  std::vector<int> gt_best_anchor(g, -1);
  for (int a = 0; a < n; ++a) {
    for (int j = 0; j < g; ++j) {
      const double v = iou(anchors[a], gt[j]);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = j;
      }
      if (v > gt_best[j]) {
        gt_best[j] = v;
        gt_best_anchor[j] = a;
      }
    }
  }
  std::vector<int> label(n, -1);
  for (int a = 0; a < n; ++a) {
    if (best_iou[a] >= cfg.rpn_pos_iou) label[a] = 1;
    else if (best_iou[a] < cfg.rpn_neg_iou) label[a] = 0;
  }
  for (int j = 0; j < g; ++j) {
    if (gt_best_anchor[j] >= 0) {
      label[gt_best_anchor[j]] = 1;
      best_gt[gt_best_anchor[j]] = j;
    }
  }
  std::vector<int> pos, neg;
  for (int a = 0; a < n; ++a) {
    if (label[a] == 1) pos.push_back(a);
    else if (label[a] == 0) neg.push_back(a);
  }
  const auto pos_quota = static_cast<std::size_t>(cfg.rpn_batch * cfg.rpn_pos_fraction);
  const auto keep_pos = draw_subset(pos, pos_quota, rng);
  const auto keep_neg = draw_subset(neg, static_cast<std::size_t>(cfg.rpn_batch) - keep_pos.size(), rng);
  t.anchor_labels.assign(n, -1);
  t.anchor_deltas.assign(n, {0, 0, 0, 0});
  for (int a : keep_pos) {
    t.anchor_labels[a] = 1;
    t.anchor_deltas[a] = encode_box(anchors[a], gt[best_gt[a]], kRpnDeltaStds);
  }
  for (int a : keep_neg) t.anchor_labels[a] = 0;

  // RoI sampling over proposals plus ground truth.
  std::vector<BoundingBox> cand = det.propose(enc);
  cand.insert(cand.end(), gt.begin(), gt.end());
  std::vector<int> rpos, rneg;
  std::vector<int> rgt(cand.size(), -1);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    double bi = 0.0;
    for (int j = 0; j < g; ++j) {
      const double v = iou(cand[i], gt[j]);
      if (v > bi) {
        bi = v;
        rgt[i] = j;
      }
    }
    (bi >= cfg.roi_pos_iou ? rpos : rneg).push_back(static_cast<int>(i));
  }
  const auto rpos_keep = draw_subset(rpos, static_cast<std::size_t>(cfg.roi_batch * cfg.roi_pos_fraction), rng);
  const auto rneg_keep = draw_subset(rneg, static_cast<std::size_t>(cfg.roi_batch) - rpos_keep.size(), rng);
  for (int i : rpos_keep) {
    BoundingBox b = cand[i];
    t.rois.push_back(b);
    t.roi_labels.push_back(gt[rgt[i]].class_id);
    t.roi_deltas.push_back(encode_box(b, gt[rgt[i]], kRoiDeltaStds));
  }
  for (int i : rneg_keep) {
    t.rois.push_back(cand[i]);
    t.roi_labels.push_back(0);
    t.roi_deltas.push_back({0, 0, 0, 0});
  }
  return t;
}

DetectionLoss detection_loss(const Encoded& enc, const RoiHeadOutputs& heads,
                             const DetectionTargets& t, OutputGrads& grads) {
  DetectionLoss loss;
  const auto n = enc.rpn_cls.size();
  grads.rpn_cls.setZero(n);
  grads.rpn_reg.setZero(n, 4);
  const int sampled = static_cast<int>(
      std::count_if(t.anchor_labels.begin(), t.anchor_labels.end(), [](int l) { return l >= 0; }));
  if (sampled > 0) {
    const double inv = 1.0 / sampled;
    for (Eigen::Index a = 0; a < n; ++a) {
      const int l = t.anchor_labels[a];
      if (l < 0) continue;
      const double x = enc.rpn_cls[a];
      // Stable BCE with logits.
      loss.rpn_cls += (std::max(x, 0.0) - x * l + std::log1p(std::exp(-std::abs(x)))) * inv;
      grads.rpn_cls[a] = (1.0 / (1.0 + std::exp(-x)) - l) * inv;
      if (l == 1) {
        for (int d = 0; d < 4; ++d) {
          double dd;
          loss.rpn_reg += smooth_l1(enc.rpn_reg(a, d) - t.anchor_deltas[a][d], kRpnBeta, dd) * inv;
          grads.rpn_reg(a, d) = dd * inv;
        }
      }
    }
  }

  const auto k = static_cast<Eigen::Index>(t.rois.size());
  grads.roi_cls.setZero(k, heads.cls.cols());
  grads.roi_reg.setZero(k, 4);
  if (k > 0) {
    const double inv = 1.0 / static_cast<double>(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto row = heads.cls.row(i);
      const double m = row.maxCoeff();
      Eigen::RowVectorXd e = (row.array() - m).exp();
      const double z = e.sum();
      const int l = t.roi_labels[i];
      loss.roi_cls += (m + std::log(z) - row[l]) * inv;
      e /= z;
      e[l] -= 1.0;
      grads.roi_cls.row(i) = e * inv;
      if (l > 0) {
        for (int d = 0; d < 4; ++d) {
          double dd;
          loss.roi_reg += smooth_l1(heads.reg(i, d) - t.roi_deltas[i][d], kRoiBeta, dd) * inv;
          grads.roi_reg(i, d) = dd * inv;
        }
      }
    }
  }
  return loss;
}

}  // namespace darthkit

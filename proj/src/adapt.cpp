#include "darthkit/adapt.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "darthkit/errors.hpp"

namespace darthkit {

double clip_grad_norm(ModelWeights& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

void sgd_update(ModelWeights& weights, const ModelWeights& grads, ModelWeights& velocity,
                double lr, double momentum, double weight_decay) {
  if (!weights.same_structure(grads)) throw ShapeError("sgd_update: gradient layout differs");
  if (momentum == 0.0 && weight_decay == 0.0) {
    weights.axpy(-lr, grads);
    return;
  }
  if (velocity.arrays.empty()) velocity = weights.zeros_like();
  for (std::size_t i = 0; i < weights.arrays.size(); ++i) {
    auto& w = weights.arrays[i].values;
    auto& v = velocity.arrays[i].values;
    v = momentum * v + grads.arrays[i].values + weight_decay * w;
    w -= lr * v;
  }
}

double step_lr(double lr, int epoch, int decay_step, double factor) {
  if (decay_step <= 0) return lr;
  return lr * std::pow(factor, epoch / decay_step);
}

// Photometric jitter on the key frame makes the source model less brittle to
// colour shifts; the contrastive view is unused during pretraining.
AugConfig PretrainConfig::default_aug() {
  AugConfig a;
  a.student_photometric = true;
  a.contrastive_geometric = false;
  a.contrastive_photometric = false;
  return a;
}

namespace {

struct FrameRef {
  std::size_t seq;
  std::size_t frame;
};

std::vector<FrameRef> all_frames(const VideoSet& set) {
  std::vector<FrameRef> out;
  for (std::size_t s = 0; s < set.sequences.size(); ++s)
    for (std::size_t f = 0; f < set.sequences[s].frames.size(); ++f) out.push_back({s, f});
  return out;
}

void check_finite(const ModelWeights& w, std::int64_t step) {
  if (!w.all_finite()) throw NumericError("weights diverged at step " + std::to_string(step));
}

// Positives of `assigned` keep their detection index; the rest is drawn by
// the balanced sampler.
std::vector<AssignedRoI> sample_positives(const std::vector<AssignedRoI>& assigned, int n, KeyedRng& rng) {
  std::vector<AssignedRoI> pos;
  for (const auto& a : assigned)
    if (a.polarity == Polarity::kPositive) pos.push_back(a);
  if (pos.empty()) return pos;
  return sample_rois(pos, n, 1.0, rng);
}

std::vector<BoundingBox> boxes_of(const std::vector<AssignedRoI>& v) {
  std::vector<BoundingBox> out;
  out.reserve(v.size());
  for (const auto& a : v) out.push_back(a.box);
  return out;
}

struct PclResult {
  double embed = 0.0;
  double aux = 0.0;
  Matrix grad_v;
  Matrix grad_k;
  int anchors = 0;
};

// Embedding and auxiliary losses for a built table, gradients already
// weighted by the loss weights.
PclResult pcl_losses(const MatchTable& table, const Matrix& v, const Matrix& k, const LossWeights& w,
                     KeyedRng& rng) {
  PclResult r;
  r.anchors = static_cast<int>(table.student_samples.size());
  Matrix gv1, gk1, gv2, gk2;
  r.embed = pcl_embed(v, k, table.pair_labels, &gv1, &gk1);
  const auto pairs = sample_aux_pairs(table.pair_labels, rng, 3);
  r.aux = pcl_aux(v, k, pairs, &gv2, &gk2);
  r.grad_v = w.embed * gv1 + w.aux * gv2;
  r.grad_k = w.embed * gk1 + w.aux * gk2;
  return r;
}

// Replaces detection indices by ground-truth track ids so matching keys on
// identity across frames.
void relabel(std::vector<AssignedRoI>& v, const std::vector<int>& ids) {
  for (auto& a : v)
    if (a.polarity == Polarity::kPositive) a.assigned_det = ids[a.assigned_det];
}

Vector sigmoid(const Vector& x) {
  return x.unaryExpr([](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

}  // namespace

AdaptState init_adapt_state(const ModelWeights& source, const AdaptConfig& cfg) {
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) throw ConfigError("adapt.tau", "tau must lie in [0,1]");
  AdaptState s;
  s.student = source;
  s.teacher = source;
  s.tau = cfg.tau;
  s.lr = cfg.lr;
  s.config = cfg;
  return s;
}

StepStats adapt_step(const Detector& det, AdaptState& state, const Image& frame, std::uint64_t seed) {
  const AdaptConfig& cfg = state.config;
  const LossWeights& gw = cfg.gammas;
  StepStats stats;

  // (1) views
  const ViewBundle views = make_views(frame, seed, cfg.aug);

  // (2) teacher detections on x_T, filtered by confidence
  const Encoded t_enc = det.encode(state.teacher, views.image_teacher);
  const std::vector<BoundingBox> t_props = det.propose(t_enc);
  const RoiHeadOutputs t_heads = det.roi_heads(state.teacher, t_enc, t_props);
  const auto t_dets = filter_detections(det.postprocess(t_heads, t_enc, cfg.teacher_detect), cfg.gamma_conf);
  stats.teacher_detections = static_cast<int>(t_dets.size());

  // (3) detections in the student frame (same geometry) and the contrastive frame
  std::vector<BoundingBox> dets_c;
  dets_c.reserve(t_dets.size());
  for (const auto& d : t_dets)
    dets_c.push_back(warp_box(inverse_warp_box(d, views.warp_teacher), views.warp_contrastive));

  // (4) student forward on x_S and x_C
  const Encoded s_enc = det.encode(state.student, views.image_student);
  const bool use_pcl = (gw.embed != 0.0 || gw.aux != 0.0) && !t_dets.empty();

  MatchTable table;
  Encoded c_enc;
  if (use_pcl) {
    KeyedRng rng(seed, 0, StreamRole::kSampling);
    std::vector<BoundingBox> s_cand = det.propose(s_enc);
    s_cand.insert(s_cand.end(), t_dets.begin(), t_dets.end());
    auto s_assigned = assign_rois(s_cand, t_dets, cfg.matching.pos_iou, cfg.matching.neg_iou, ViewKind::kStudent);
    auto s_sampled = sample_positives(s_assigned, cfg.matching.student_samples, rng);

    c_enc = det.encode(state.student, views.image_contrastive);
    std::vector<BoundingBox> c_cand = det.propose(c_enc);
    for (const auto& d : dets_c)
      if (!d.degenerate()) c_cand.push_back(d);
    auto c_assigned = assign_rois(c_cand, dets_c, cfg.matching.pos_iou, cfg.matching.neg_iou, ViewKind::kContrastive);
    auto c_sampled = sample_rois(c_assigned, cfg.matching.contrastive_samples, cfg.matching.pos_neg_ratio, rng);
    table = build_match_table(s_sampled, c_sampled);
  }

  const int v_rows = static_cast<int>(table.student_samples.size());
  std::vector<BoundingBox> s_rois = boxes_of(table.student_samples);
  s_rois.insert(s_rois.end(), t_props.begin(), t_props.end());
  const RoiHeadOutputs s_heads = det.roi_heads(state.student, s_enc, s_rois);

  // (5)-(6) losses; teacher outputs are plain values and receive nothing
  LossParts parts;
  OutputGrads s_up, c_up;
  const auto k_props = static_cast<Eigen::Index>(t_props.size());
  const Matrix p_s = s_heads.cls.bottomRows(k_props);
  const Matrix t_s = s_heads.reg.bottomRows(k_props);

  Vector g_rpn_s;
  Matrix g_rpn_r;
  // By default objectness is compared as probabilities: raw logits of
  // background anchors are unbounded and dominate the mean.
  if (cfg.dc_rpn_probabilities) {
    const Vector prob_t = sigmoid(t_enc.rpn_cls);
    const Vector prob_s = sigmoid(s_enc.rpn_cls);
    parts.dc_rpn = dc_rpn(prob_t, t_enc.rpn_reg, prob_s, s_enc.rpn_reg, cfg.epsilon, &g_rpn_s, &g_rpn_r);
    s_up.rpn_cls = gw.dc_rpn * g_rpn_s.cwiseProduct(prob_s.cwiseProduct((1.0 - prob_s.array()).matrix()));
  } else {
    parts.dc_rpn = dc_rpn(t_enc.rpn_cls, t_enc.rpn_reg, s_enc.rpn_cls, s_enc.rpn_reg, cfg.epsilon, &g_rpn_s, &g_rpn_r);
    s_up.rpn_cls = gw.dc_rpn * g_rpn_s;
  }
  s_up.rpn_reg = gw.dc_rpn * g_rpn_r;

  Matrix g_p, g_t;
  // Same reasoning for RoI class scores: logits of background proposals drift
  // without bound, and matching them destabilised adaptation on the toy target.
  parts.dc_roi = cfg.dc_roi_probabilities ? dc_roi_softmax(t_heads.cls, t_heads.reg, p_s, t_s, &g_p, &g_t)
                                           : dc_roi(t_heads.cls, t_heads.reg, p_s, t_s, &g_p, &g_t);
  s_up.roi_cls.setZero(s_heads.cls.rows(), s_heads.cls.cols());
  s_up.roi_reg.setZero(s_heads.reg.rows(), s_heads.reg.cols());
  s_up.roi_cls.bottomRows(k_props) = gw.dc_roi * g_p;
  s_up.roi_reg.bottomRows(k_props) = gw.dc_roi * g_t;

  RoiHeadOutputs c_heads;
  if (!table.empty()) {
    c_heads = det.roi_heads(state.student, c_enc, boxes_of(table.contrastive_targets));
    const Matrix v = s_heads.embeddings.topRows(v_rows);
    KeyedRng pair_rng(seed, 1, StreamRole::kSampling);
    PclResult pcl = pcl_losses(table, v, c_heads.embeddings, gw, pair_rng);
    parts.embed = pcl.embed;
    parts.aux = pcl.aux;
    stats.pcl_anchors = pcl.anchors;
    s_up.embeddings.setZero(s_heads.embeddings.rows(), s_heads.embeddings.cols());
    s_up.embeddings.topRows(v_rows) = pcl.grad_v;
    c_up.embeddings = std::move(pcl.grad_k);
  }
  stats.losses = total_loss(parts, gw);

  // (7) student update
  ModelWeights grads = state.student.zeros_like();
  det.backward(state.student, s_enc, &s_heads, s_up, grads);
  if (!table.empty()) det.backward(state.student, c_enc, &c_heads, c_up, grads);
  stats.grad_norm = clip_grad_norm(grads, cfg.grad_clip_norm);
  stats.clipped_norm = std::sqrt(grads.squared_norm());
  sgd_update(state.student, grads, state.velocity, state.lr, cfg.momentum);
  ++state.step;
  check_finite(state.student, state.step);

  // (8) teacher EMA
  if (state.tau != 1.0) state.teacher = blend_weights(state.teacher, state.student, state.tau);
  return stats;
}

ModelWeights adapt_run(const Detector& det, const ModelWeights& source, const VideoSet& target,
                       const AdaptConfig& cfg, std::ostream* log) {
  AdaptState state = init_adapt_state(source, cfg);
  const auto frames = all_frames(target);
  std::uint64_t index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.lr = step_lr(cfg.lr, epoch, cfg.lr_decay_step, cfg.lr_decay_factor);
    auto order = frames;
    KeyedRng shuffle(cfg.seed, static_cast<std::uint64_t>(epoch), StreamRole::kShuffle);
    shuffle.shuffle(order.begin(), order.end());
    for (const auto& ref : order) {
      const Image& img = target.sequences[ref.seq].frames[ref.frame];
      const StepStats st = adapt_step(det, state, img, view_seed(cfg.seed, index++));
      if (log) *log << loss_log_line(state.step, st.losses) << '\n';
    }
  }
  return state.student;
}

ModelWeights pretrain_source(const Detector& det, const ModelWeights& init,
                             const LabeledVideoSet& source, const PretrainConfig& cfg,
                             std::ostream* log) {
  if (source.gt.sequences.size() != source.videos.sequences.size())
    throw ShapeError("pretrain: ground truth does not cover every sequence");
  ModelWeights w = init;
  ModelWeights velocity;
  const auto frames = all_frames(source.videos);
  std::uint64_t index = 0;
  std::int64_t step = 0;
  const bool track_loss = cfg.track_weights.embed != 0.0 || cfg.track_weights.aux != 0.0;
  // The student view is the photometrically distorted teacher view, so the
  // labels warped for the teacher view apply to it unchanged.
  const bool photometric = cfg.aug.student_photometric;

  auto labels_at = [&](std::size_t s, std::size_t f, const WarpRecord& warp, std::vector<int>& ids) {
    std::vector<BoundingBox> boxes;
    ids.clear();
    for (const auto& row : rows_at(source.gt.sequences[s], static_cast<int>(f) + 1)) {
      if (row.box.confidence == 0.0) continue;
      const BoundingBox b = warp_box(row.box, warp);
      if (b.degenerate() || b.width() < 2.0 || b.height() < 2.0) continue;
      boxes.push_back(b);
      ids.push_back(row.track_id);
    }
    return boxes;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = step_lr(cfg.lr, epoch, cfg.lr_decay_step, cfg.lr_decay_factor);
    auto order = frames;
    KeyedRng shuffle(cfg.seed, static_cast<std::uint64_t>(epoch), StreamRole::kShuffle);
    shuffle.shuffle(order.begin(), order.end());
    for (const auto& ref : order) {
      const std::uint64_t vseed = view_seed(cfg.seed, index++);
      KeyedRng rng(vseed, 0, StreamRole::kSampling);
      const auto& seq = source.videos.sequences[ref.seq];
      const ViewBundle key = make_views(seq.frames[ref.frame], vseed, cfg.aug);
      std::vector<int> key_ids;
      const auto key_gt = labels_at(ref.seq, ref.frame, key.warp_teacher, key_ids);

      const Encoded enc = det.encode(w, photometric ? key.image_student : key.image_teacher);
      const DetectionTargets targets = build_detection_targets(det, enc, key_gt, cfg.supervised, rng);

      // Key-frame embedding samples ride along in the same head evaluation.
      MatchTable table;
      Encoded ref_enc;
      if (track_loss && !key_gt.empty()) {
        const int n = static_cast<int>(seq.frames.size());
        const int lo = std::max(0, static_cast<int>(ref.frame) - cfg.ref_window);
        const int hi = std::min(n - 1, static_cast<int>(ref.frame) + cfg.ref_window);
        const auto rf = static_cast<std::size_t>(lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))));
        const ViewBundle other = make_views(seq.frames[rf], view_seed(vseed, 1), cfg.aug);
        std::vector<int> ref_ids;
        const auto ref_gt = labels_at(ref.seq, rf, other.warp_teacher, ref_ids);
        if (!ref_gt.empty()) {
          std::vector<BoundingBox> kc = det.propose(enc);
          kc.insert(kc.end(), key_gt.begin(), key_gt.end());
          auto ka = assign_rois(kc, key_gt, cfg.matching.pos_iou, cfg.matching.neg_iou, ViewKind::kStudent);
          relabel(ka, key_ids);
          auto ks = sample_positives(ka, cfg.matching.student_samples, rng);

          ref_enc = det.encode(w, photometric ? other.image_student : other.image_teacher);
          std::vector<BoundingBox> rc = det.propose(ref_enc);
          rc.insert(rc.end(), ref_gt.begin(), ref_gt.end());
          auto ra = assign_rois(rc, ref_gt, cfg.matching.pos_iou, cfg.matching.neg_iou, ViewKind::kContrastive);
          relabel(ra, ref_ids);
          auto rs = sample_rois(ra, cfg.matching.contrastive_samples, cfg.matching.pos_neg_ratio, rng);
          table = build_match_table(ks, rs);
        }
      }

      const auto n_det = static_cast<Eigen::Index>(targets.rois.size());
      std::vector<BoundingBox> rois = targets.rois;
      const auto key_embed = boxes_of(table.student_samples);
      rois.insert(rois.end(), key_embed.begin(), key_embed.end());
      const RoiHeadOutputs heads = det.roi_heads(w, enc, rois);

      RoiHeadOutputs det_view;
      det_view.cls = heads.cls.topRows(n_det);
      det_view.reg = heads.reg.topRows(n_det);
      OutputGrads dg;
      const DetectionLoss dl = detection_loss(enc, det_view, targets, dg);
      OutputGrads up;
      up.rpn_cls = std::move(dg.rpn_cls);
      up.rpn_reg = std::move(dg.rpn_reg);
      up.roi_cls.setZero(heads.cls.rows(), heads.cls.cols());
      up.roi_reg.setZero(heads.reg.rows(), heads.reg.cols());
      up.roi_cls.topRows(n_det) = dg.roi_cls;
      up.roi_reg.topRows(n_det) = dg.roi_reg;

      ModelWeights grads = w.zeros_like();
      double embed = 0.0, aux = 0.0;
      if (!table.empty()) {
        const RoiHeadOutputs ref_heads = det.roi_heads(w, ref_enc, boxes_of(table.contrastive_targets));
        const auto v_rows = static_cast<Eigen::Index>(table.student_samples.size());
        PclResult pcl = pcl_losses(table, heads.embeddings.bottomRows(v_rows), ref_heads.embeddings,
                                   cfg.track_weights, rng);
        embed = pcl.embed;
        aux = pcl.aux;
        up.embeddings.setZero(heads.embeddings.rows(), heads.embeddings.cols());
        up.embeddings.bottomRows(v_rows) = pcl.grad_v;
        OutputGrads ref_up;
        ref_up.embeddings = std::move(pcl.grad_k);
        det.backward(w, ref_enc, &ref_heads, ref_up, grads);
      }
      det.backward(w, enc, &heads, up, grads);
      clip_grad_norm(grads, cfg.grad_clip_norm);
      sgd_update(w, grads, velocity, lr, cfg.momentum, cfg.weight_decay);
      ++step;
      check_finite(w, step);
      if (log) {
        nlohmann::ordered_json j{{"step", step},          {"rpn_cls", dl.rpn_cls}, {"rpn_reg", dl.rpn_reg},
                                 {"roi_cls", dl.roi_cls}, {"roi_reg", dl.roi_reg}, {"embed", embed},
                                 {"aux", aux}};
        *log << j.dump() << '\n';
      }
    }
  }
  return w;
}

ModelWeights sfod_baseline(const Detector& det, const ModelWeights& source, const VideoSet& target,
                           double conf_thr, const AdaptConfig& cfg, std::ostream* log) {
  if (!(conf_thr >= 0.0 && conf_thr <= 1.0)) throw ConfigError("sfod.conf_thr", "threshold must lie in [0,1]");
  ModelWeights student = source;
  ModelWeights velocity;
  const auto frames = all_frames(target);
  AugConfig aug = cfg.aug;
  aug.student_photometric = false;
  aug.contrastive_geometric = false;
  aug.contrastive_photometric = false;
  std::uint64_t index = 0;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = step_lr(cfg.lr, epoch, cfg.lr_decay_step, cfg.lr_decay_factor);
    auto order = frames;
    KeyedRng shuffle(cfg.seed, static_cast<std::uint64_t>(epoch), StreamRole::kShuffle);
    shuffle.shuffle(order.begin(), order.end());
    for (const auto& ref : order) {
      const std::uint64_t vseed = view_seed(cfg.seed, index++);
      const ViewBundle views = make_views(target.sequences[ref.seq].frames[ref.frame], vseed, aug);
      const auto pseudo = filter_detections(det.detect(source, views.image_teacher, cfg.teacher_detect), conf_thr);
      if (pseudo.empty()) continue;
      KeyedRng rng(vseed, 0, StreamRole::kSampling);
      const Encoded enc = det.encode(student, views.image_teacher);
      const DetectionTargets targets = build_detection_targets(det, enc, pseudo, cfg.supervised, rng);
      const RoiHeadOutputs heads = det.roi_heads(student, enc, targets.rois);
      OutputGrads up;
      const DetectionLoss dl = detection_loss(enc, heads, targets, up);
      ModelWeights grads = student.zeros_like();
      det.backward(student, enc, &heads, up, grads);
      clip_grad_norm(grads, cfg.grad_clip_norm);
      sgd_update(student, grads, velocity, lr, cfg.momentum);
      ++step;
      check_finite(student, step);
      if (log) {
        nlohmann::ordered_json j{{"step", step},          {"rpn_cls", dl.rpn_cls}, {"rpn_reg", dl.rpn_reg},
                                 {"roi_cls", dl.roi_cls}, {"roi_reg", dl.roi_reg}, {"pseudo_labels", pseudo.size()}};
        *log << j.dump() << '\n';
      }
    }
  }
  return student;
}

}  // namespace darthkit

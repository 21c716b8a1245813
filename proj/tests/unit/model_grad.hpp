// Finite-difference check of all four losses composed with the detector:
// the student side runs through encode/roi_heads, the teacher side and the
// contrastive embeddings are fixed random tensors.
#pragma once

#include <vector>

#include "darthkit/losses.hpp"
#include "darthkit/model.hpp"
#include "oracles.hpp"

namespace oracle {

struct ComposedInstance {
  darthkit::Image image;
  std::vector<darthkit::BoundingBox> rois;
  darthkit::Matrix k;
  darthkit::PairLabels labels;
  std::vector<darthkit::SampledPair> pairs;
  darthkit::Vector s_t;
  darthkit::Matrix r_t, p_t, t_t;
  double epsilon = 0.1;
};

inline ComposedInstance make_composed_instance(const darthkit::Detector& det, const darthkit::ModelWeights& w,
                                               std::uint64_t seed) {
  using namespace darthkit;
  KeyedRng rng(seed, 0, StreamRole::kGeneric);
  ComposedInstance c;
  c.image = Image(16, 16);
  for (auto& px : c.image.data) px = static_cast<std::uint8_t>(rng.below(256));
  const int v = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < v; ++i) c.rois.push_back(random_box(rng, 16.0, 3.0, 10.0));
  const int kn = 3 + static_cast<int>(rng.below(3));
  c.k = random_matrix(rng, kn, det.config().embed_dim);
  c.labels = PairLabels::Zero(v, kn);
  for (int i = 0; i < v; ++i) {
    c.labels(i, static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(kn)))) = true;
    for (int j = 0; j < kn; ++j)
      if (rng.bernoulli(0.2)) c.labels(i, j) = true;
  }
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < kn; ++j) c.pairs.push_back({i, j, static_cast<bool>(c.labels(i, j))});

  // Teacher tensors: the student's own outputs plus noise, so the dc_rpn
  // indicator is mixed and the values are in a realistic range.
  const Encoded enc = det.encode(w, c.image);
  const RoiHeadOutputs heads = det.roi_heads(w, enc, c.rois);
  c.s_t = enc.rpn_cls;
  for (Eigen::Index i = 0; i < c.s_t.size(); ++i) c.s_t[i] += rng.uniform(-0.5, 0.5);
  c.r_t = enc.rpn_reg + random_matrix(rng, enc.rpn_reg.rows(), 4, 0.3);
  c.p_t = heads.cls + random_matrix(rng, heads.cls.rows(), heads.cls.cols(), 0.5);
  c.t_t = heads.reg + random_matrix(rng, heads.reg.rows(), 4, 0.3);
  return c;
}

inline double composed_loss(const darthkit::Detector& det, const darthkit::ModelWeights& w, const ComposedInstance& c,
                            darthkit::ModelWeights* grads = nullptr) {
  using namespace darthkit;
  const Encoded enc = det.encode(w, c.image);
  const RoiHeadOutputs heads = det.roi_heads(w, enc, c.rois);
  Matrix gv1, gv2, gp, gt, gr;
  Vector gs;
  const bool want = grads != nullptr;
  const double l = pcl_embed(heads.embeddings, c.k, c.labels, want ? &gv1 : nullptr) +
                   pcl_aux(heads.embeddings, c.k, c.pairs, want ? &gv2 : nullptr) +
                   dc_rpn(c.s_t, c.r_t, enc.rpn_cls, enc.rpn_reg, c.epsilon, want ? &gs : nullptr,
                          want ? &gr : nullptr) +
                   dc_roi(c.p_t, c.t_t, heads.cls, heads.reg, want ? &gp : nullptr, want ? &gt : nullptr);
  if (want) {
    OutputGrads up;
    up.embeddings = gv1 + gv2;
    up.rpn_cls = gs;
    up.rpn_reg = gr;
    up.roi_cls = gp;
    up.roi_reg = gt;
    *grads = w.zeros_like();
    det.backward(w, enc, &heads, up, *grads);
  }
  return l;
}

/// Relative error between the analytic gradient and central differences over
/// `num_probes` randomly chosen parameters.
inline double composed_grad_error(const darthkit::Detector& det, const darthkit::ModelWeights& w0,
                                  std::uint64_t seed, int num_probes = 200) {
  using namespace darthkit;
  const ComposedInstance c = make_composed_instance(det, w0, seed);
  ModelWeights analytic;
  composed_loss(det, w0, c, &analytic);

  KeyedRng rng(seed, 1, StreamRole::kSampling);
  std::vector<std::pair<std::size_t, Eigen::Index>> probes;
  for (int p = 0; p < num_probes; ++p) {
    const auto a = static_cast<std::size_t>(rng.below(w0.arrays.size()));
    const auto n = static_cast<std::uint64_t>(w0.arrays[a].values.size());
    probes.emplace_back(a, static_cast<Eigen::Index>(rng.below(n)));
  }
  Matrix fd(1, num_probes), an(1, num_probes);
  ModelWeights w = w0;
  const double h = 1e-6;
  for (int p = 0; p < num_probes; ++p) {
    const auto [a, i] = probes[p];
    const double orig = w.arrays[a].values[i];
    w.arrays[a].values[i] = orig + h;
    const double lp = composed_loss(det, w, c);
    w.arrays[a].values[i] = orig - h;
    const double lm = composed_loss(det, w, c);
    w.arrays[a].values[i] = orig;
    fd(0, p) = (lp - lm) / (2 * h);
    an(0, p) = analytic.arrays[a].values[i];
  }
  return rel_error(fd, an);
}

}  // namespace oracle

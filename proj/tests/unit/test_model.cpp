#include <gtest/gtest.h>

#include <filesystem>

#include "darthkit/errors.hpp"
#include "darthkit/model.hpp"
#include "darthkit/synthbench.hpp"
#include "model_grad.hpp"
#include "oracles.hpp"

using namespace darthkit;

namespace {

Image frame(int w = 64, int h = 48, std::uint64_t seed = 1) {
  SceneSpec spec;
  spec.num_objects = 2;
  spec.num_frames = 1;
  spec.width = w;
  spec.height = h;
  spec.seed = seed;
  return generate(spec, DomainStyle::source()).video.frames[0];
}

bool all_finite(const DetectorOutputs& o) {
  return o.rpn_cls.allFinite() && o.rpn_reg.allFinite() && o.roi_cls.allFinite() && o.roi_reg.allFinite() &&
         o.embeddings.allFinite();
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("darthkit_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Forward, DeterministicForSameInput) {
  const Detector det;
  const auto w = det.init_weights(3);
  const Image img = frame();
  const auto a = det.forward(w, img);
  const auto b = det.forward(w, img);
  EXPECT_EQ(a.rpn_cls, b.rpn_cls);
  EXPECT_EQ(a.roi_cls, b.roi_cls);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.proposals, b.proposals);
}

TEST(Forward, FullImageRoiShapes) {
  const Detector det;
  const auto w = det.init_weights(3);
  const Image img = frame();
  const std::vector<BoundingBox> rois{BoundingBox{0, 0, 64, 48}};
  const auto out = det.forward(w, img, rois);
  EXPECT_EQ(out.embeddings.rows(), 1);
  EXPECT_EQ(out.embeddings.cols(), det.config().embed_dim);
  EXPECT_EQ(out.roi_cls.rows(), 1);
  EXPECT_EQ(out.roi_cls.cols(), det.config().num_classes + 1);
  EXPECT_EQ(out.roi_reg.cols(), 4);
  const int cells = (64 / ModelConfig::kStride) * (48 / ModelConfig::kStride);
  EXPECT_EQ(out.rpn_cls.size(), cells * det.config().num_anchors_per_cell());
  EXPECT_EQ(out.rpn_reg.rows(), out.rpn_cls.size());
}

TEST(Forward, FiniteOverRandomWeights) {
  const Detector det;
  const Image img = frame();
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto w = det.init_weights(s);
    KeyedRng rng(s);
    for (auto& a : w.arrays)
      for (Eigen::Index i = 0; i < a.values.size(); ++i) a.values[i] += 0.5 * rng.normal();
    EXPECT_TRUE(all_finite(det.forward(w, img))) << "seed " << s;
  }
}

TEST(Forward, RoiOrderIsEquivariant) {
  const Detector det;
  const auto w = det.init_weights(8);
  const Image img = frame();
  KeyedRng rng(8);
  std::vector<BoundingBox> rois;
  for (int i = 0; i < 6; ++i) rois.push_back(oracle::random_box(rng, 48.0, 4.0, 20.0));
  std::vector<BoundingBox> rev(rois.rbegin(), rois.rend());
  const auto a = det.forward(w, img, rois);
  const auto b = det.forward(w, img, rev);
  // Blocked matrix products may round differently per row position.
  for (int i = 0; i < 6; ++i) {
    EXPECT_LT((a.roi_cls.row(i) - b.roi_cls.row(5 - i)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a.roi_reg.row(i) - b.roi_reg.row(5 - i)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a.embeddings.row(i) - b.embeddings.row(5 - i)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Detect, ScoreThresholdOneGivesNothing) {
  const Detector det;
  const auto w = det.init_weights(2);
  DetectConfig cfg;
  cfg.score_thr = 1.0;
  EXPECT_TRUE(det.detect(w, frame(), cfg).empty());
}

TEST(Detect, IdenticalCandidatesCollapsePerClass) {
  const Detector det;
  const auto w = det.init_weights(2);
  const Image img = frame();
  const auto enc = det.encode(w, img);
  const std::vector<BoundingBox> rois{BoundingBox{8, 8, 30, 30}, BoundingBox{8, 8, 30, 30}};
  const auto heads = det.roi_heads(w, enc, rois);
  DetectConfig cfg;
  cfg.score_thr = 0.0;
  cfg.nms_iou = 0.5;
  cfg.single_label = false;
  const auto dets = det.postprocess(heads, enc, cfg);
  std::vector<int> per_class(det.config().num_classes + 1, 0);
  for (const auto& d : dets) ++per_class[d.class_id];
  for (int c = 1; c <= det.config().num_classes; ++c) EXPECT_EQ(per_class[c], 1) << "class " << c;

  // single-label: one detection in total, carrying the top class
  cfg.single_label = true;
  const auto one = det.postprocess(heads, enc, cfg);
  ASSERT_EQ(one.size(), 1u);
  const auto row = heads.cls.row(0).tail(det.config().num_classes);
  Eigen::Index top;
  row.maxCoeff(&top);
  EXPECT_EQ(one[0].class_id, static_cast<int>(top) + 1);
}

TEST(Detect, SortedByConfidence) {
  const Detector det;
  const auto w = det.init_weights(4);
  DetectConfig cfg;
  cfg.score_thr = 0.0;
  const auto dets = det.detect(w, frame(), cfg);
  ASSERT_FALSE(dets.empty());
  for (std::size_t i = 1; i < dets.size(); ++i) EXPECT_GE(dets[i - 1].confidence, dets[i].confidence);
  EXPECT_LE(static_cast<int>(dets.size()), cfg.max_detections);
}

TEST(Blend, Endpoints) {
  const Detector det;
  const auto a = det.init_weights(1);
  const auto b = det.init_weights(2);
  EXPECT_EQ(blend_weights(a, b, 1.0), a);
  EXPECT_EQ(blend_weights(a, b, 0.0), b);
  EXPECT_EQ(blend_weights(a, a, 0.37), a);
}

TEST(Blend, ScalarArithmetic) {
  ModelWeights a, b;
  a.arrays.push_back({"x", {1}, Vector::Constant(1, 1.0)});
  b.arrays.push_back({"x", {1}, Vector::Constant(1, 0.0)});
  EXPECT_NEAR(blend_weights(a, b, 0.998).arrays[0].values[0], 0.998, 1e-15);
}

TEST(Blend, LayoutMismatchThrows) {
  ModelWeights a, b;
  a.arrays.push_back({"x", {2}, Vector::Zero(2)});
  b.arrays.push_back({"x", {3}, Vector::Zero(3)});
  EXPECT_THROW(blend_weights(a, b, 0.5), ShapeError);
}

TEST(BoxCoding, EncodeDecodeRoundTrip) {
  KeyedRng rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto ref = oracle::random_box(rng);
    const auto tgt = oracle::random_box(rng);
    const auto d = encode_box(ref, tgt, kRoiDeltaStds);
    const auto back = decode_box(ref, d.data(), kRoiDeltaStds);
    EXPECT_NEAR(back.x1, tgt.x1, 1e-9);
    EXPECT_NEAR(back.y2, tgt.y2, 1e-9);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const Detector det;
  Checkpoint c{det.config(), det.init_weights(5), 42};
  const auto dir = temp_dir("ckpt");
  save_checkpoint(c, dir);
  const Checkpoint back = load_checkpoint(dir);
  EXPECT_EQ(back.weights, c.weights);
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.model, c.model);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MissingDirectoryThrows) {
  EXPECT_THROW(load_checkpoint(temp_dir("missing")), Error);
}

TEST(Gradient, LossesComposedWithModelMatchFiniteDifferences) {
  const Detector det;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto w = det.init_weights(100 + s);
    EXPECT_LE(oracle::composed_grad_error(det, w, s, 120), 1e-4) << "instance " << s;
  }
}

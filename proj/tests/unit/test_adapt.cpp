#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "darthkit/errors.hpp"
#include "darthkit/adapt.hpp"
#include "darthkit/synthbench.hpp"

using namespace darthkit;

namespace {

BenchmarkSpec tiny_bench() {
  BenchmarkSpec b;
  b.frames_per_sequence = 4;
  b.width = 64;
  b.height = 48;
  return b;
}

LabeledVideoSet tiny_split(const DomainStyle& style, int sequences, std::uint64_t seed) {
  return make_split(tiny_bench(), style, sequences, seed, "t");
}

double diff_norm(const ModelWeights& a, const ModelWeights& b) {
  ModelWeights d = a;
  d.axpy(-1.0, b);
  return std::sqrt(d.squared_norm());
}

AdaptConfig small_adapt() {
  AdaptConfig cfg;
  cfg.aug.base_width = 64;
  cfg.matching.student_samples = 8;
  cfg.matching.contrastive_samples = 16;
  cfg.gamma_conf = 0.0;  // an untrained model is never confident
  cfg.teacher_detect.score_thr = 0.0;
  cfg.teacher_detect.max_detections = 5;
  return cfg;
}

}  // namespace

TEST(Optimizer, ClipGradNorm) {
  ModelWeights g;
  g.arrays.push_back({"a", {2}, Vector::Constant(2, 3.0)});
  g.arrays.push_back({"b", {1}, Vector::Constant(1, 4.0)});
  // norm sqrt(9 + 9 + 16)
  EXPECT_NEAR(clip_grad_norm(g, 1.0), std::sqrt(34.0), 1e-12);
  EXPECT_NEAR(std::sqrt(g.squared_norm()), 1.0, 1e-12);
  ModelWeights h = g;
  clip_grad_norm(h, 0.0);
  EXPECT_EQ(h, g);
}

TEST(Optimizer, SgdAndMomentum) {
  ModelWeights w, g, v;
  w.arrays.push_back({"a", {1}, Vector::Constant(1, 1.0)});
  g.arrays.push_back({"a", {1}, Vector::Constant(1, 2.0)});
  sgd_update(w, g, v, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(w.arrays[0].values[0], 0.8);
  sgd_update(w, g, v, 0.1, 0.5);  // v = 2
  sgd_update(w, g, v, 0.1, 0.5);  // v = 3
  EXPECT_NEAR(w.arrays[0].values[0], 0.8 - 0.2 - 0.3, 1e-15);
}

TEST(Optimizer, StepLr) {
  EXPECT_DOUBLE_EQ(step_lr(0.01, 0, 8, 0.1), 0.01);
  EXPECT_DOUBLE_EQ(step_lr(0.01, 7, 8, 0.1), 0.01);
  EXPECT_NEAR(step_lr(0.01, 8, 8, 0.1), 0.001, 1e-18);
  EXPECT_DOUBLE_EQ(step_lr(0.01, 100, 0, 0.1), 0.01);
}

TEST(Pretrain, ZeroEpochsReturnsInit) {
  const Detector det;
  BenchmarkSpec b = tiny_bench();
  b.frames_per_sequence = 1;
  const auto data = make_split(b, DomainStyle::source(), 1, 1, "p");
  const auto init = det.init_weights(1);
  PretrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(pretrain_source(det, init, data, cfg), init);
}

TEST(Pretrain, DeterministicAndLogged) {
  const Detector det;
  const auto data = tiny_split(DomainStyle::source(), 1, 2);
  PretrainConfig cfg;
  cfg.epochs = 1;
  cfg.aug.base_width = 64;
  cfg.seed = 5;
  std::ostringstream log_a, log_b;
  const auto a = pretrain_source(det, det.init_weights(1), data, cfg, &log_a);
  const auto b = pretrain_source(det, det.init_weights(1), data, cfg, &log_b);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, det.init_weights(1));
  EXPECT_EQ(log_a.str(), log_b.str());
  EXPECT_FALSE(log_a.str().empty());
}

TEST(AdaptStep, NoSurvivingDetectionsDisablesPcl) {
  const Detector det;
  const auto frame = tiny_split(DomainStyle::target(), 1, 3).videos.sequences[0].frames[0];
  AdaptConfig cfg = small_adapt();
  cfg.gamma_conf = 1.0;
  cfg.teacher_detect.score_thr = 0.3;
  AdaptState st = init_adapt_state(det.init_weights(2), cfg);
  const auto stats = adapt_step(det, st, frame, 11);
  EXPECT_EQ(stats.teacher_detections, 0);
  EXPECT_EQ(stats.losses.embed, 0.0);
  EXPECT_EQ(stats.losses.aux, 0.0);
  EXPECT_GE(stats.losses.dc_rpn, 0.0);
  EXPECT_GE(stats.losses.dc_roi, 0.0);
  EXPECT_EQ(st.step, 1);
}

TEST(AdaptStep, PclRunsWhenTeacherDetects) {
  const Detector det;
  const auto frame = tiny_split(DomainStyle::target(), 1, 3).videos.sequences[0].frames[0];
  AdaptState st = init_adapt_state(det.init_weights(2), small_adapt());
  const auto stats = adapt_step(det, st, frame, 11);
  EXPECT_GT(stats.teacher_detections, 0);
  EXPECT_GT(stats.pcl_anchors, 0);
  EXPECT_GT(stats.losses.embed, 0.0);
  EXPECT_TRUE(std::isfinite(stats.losses.total));
}

TEST(AdaptStep, TauOneFreezesTeacher) {
  const Detector det;
  const auto frame = tiny_split(DomainStyle::target(), 1, 4).videos.sequences[0].frames[0];
  AdaptConfig cfg = small_adapt();
  cfg.tau = 1.0;
  cfg.lr = 0.01;
  AdaptState st = init_adapt_state(det.init_weights(3), cfg);
  const ModelWeights before = st.teacher;
  adapt_step(det, st, frame, 1);
  adapt_step(det, st, frame, 2);
  EXPECT_EQ(st.teacher, before);
  EXPECT_NE(st.student, before);
}

TEST(AdaptStep, GradientClipBound) {
  const Detector det;
  const auto frames = tiny_split(DomainStyle::target(), 1, 5).videos.sequences[0].frames;
  AdaptConfig cfg = small_adapt();
  cfg.grad_clip_norm = 0.05;
  AdaptState st = init_adapt_state(det.init_weights(4), cfg);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto stats = adapt_step(det, st, frames[i], i);
    EXPECT_LE(stats.clipped_norm, cfg.grad_clip_norm + 1e-6);
  }
}

// With the student frozen the teacher approaches it geometrically.
TEST(AdaptStep, EmaGeometricLaw) {
  const Detector det;
  const auto frame = tiny_split(DomainStyle::target(), 1, 6).videos.sequences[0].frames[0];
  for (double tau : {0.0, 0.98, 0.998, 1.0}) {
    AdaptConfig cfg = small_adapt();
    cfg.tau = tau;
    cfg.lr = 0.0;
    AdaptState st = init_adapt_state(det.init_weights(7), cfg);
    st.teacher = det.init_weights(8);
    const ModelWeights theta = st.student;
    const double d0 = diff_norm(st.teacher, theta);
    for (int n = 1; n <= 4; ++n) {
      adapt_step(det, st, frame, n);
      ASSERT_EQ(st.student, theta);
      const double expect = std::pow(tau, n) * d0;
      const double got = diff_norm(st.teacher, theta);
      if (expect == 0.0)
        EXPECT_EQ(got, 0.0);
      else
        EXPECT_NEAR(got / expect, 1.0, 1e-9) << "tau " << tau << " n " << n;
      // every array contracts by the same factor
      for (std::size_t a = 0; a < theta.arrays.size(); ++a) {
        const double da = (st.teacher.arrays[a].values - theta.arrays[a].values).norm();
        const double d0a = (det.init_weights(8).arrays[a].values - theta.arrays[a].values).norm();
        EXPECT_NEAR(da, std::pow(tau, n) * d0a, 1e-9 * std::max(1.0, d0a));
      }
    }
  }
}

TEST(AdaptRun, ZeroEpochsReturnsSource) {
  const Detector det;
  const auto target = tiny_split(DomainStyle::target(), 1, 7).videos;
  AdaptConfig cfg = small_adapt();
  cfg.epochs = 0;
  const auto src = det.init_weights(9);
  EXPECT_EQ(adapt_run(det, src, target, cfg), src);
}

TEST(AdaptRun, LossTraceFiniteAndDeterministic) {
  const Detector det;
  const auto target = tiny_split(DomainStyle::target(), 2, 8).videos;
  AdaptConfig cfg = small_adapt();
  cfg.epochs = 1;
  cfg.seed = 3;
  std::ostringstream log_a, log_b;
  const auto a = adapt_run(det, det.init_weights(10), target, cfg, &log_a);
  const auto b = adapt_run(det, det.init_weights(10), target, cfg, &log_b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(log_a.str(), log_b.str());
  std::istringstream lines(log_a.str());
  std::string line;
  int steps = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(std::isfinite(j["total"].get<double>()));
    EXPECT_EQ(j["step"].get<int>(), ++steps);
  }
  EXPECT_EQ(steps, static_cast<int>(target.num_frames()));
}

TEST(AdaptRun, RejectsTauOutsideUnitInterval) {
  AdaptConfig cfg;
  cfg.tau = 1.5;
  EXPECT_THROW(init_adapt_state(ModelWeights{}, cfg), ConfigError);
}

TEST(Sfod, FullThresholdLeavesWeights) {
  const Detector det;
  const auto target = tiny_split(DomainStyle::target(), 1, 9).videos;
  AdaptConfig cfg = small_adapt();
  cfg.epochs = 1;
  const auto src = det.init_weights(11);
  EXPECT_EQ(sfod_baseline(det, src, target, 1.0, cfg), src);
}

TEST(Sfod, DeterministicAndTrains) {
  const Detector det;
  const auto target = tiny_split(DomainStyle::target(), 1, 10).videos;
  AdaptConfig cfg = small_adapt();
  cfg.epochs = 1;
  cfg.lr = 0.01;
  const auto src = det.init_weights(12);
  const auto a = sfod_baseline(det, src, target, 0.0, cfg);
  EXPECT_EQ(a, sfod_baseline(det, src, target, 0.0, cfg));
  EXPECT_NE(a, src);
  EXPECT_THROW(sfod_baseline(det, src, target, 1.5, cfg), ConfigError);
}

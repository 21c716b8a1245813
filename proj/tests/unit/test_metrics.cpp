#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "darthkit/errors.hpp"
#include "darthkit/metrics.hpp"
#include "darthkit/synthbench.hpp"
#include "oracles.hpp"

using namespace darthkit;

namespace {

BoundingBox at(double x, double y, int cls = 1, double conf = 1.0) { return BoundingBox{x, y, x + 10, y + 10, cls, conf}; }

// One object moving right over `frames` frames.
SequenceTracks line(int id, int frames, double y = 0.0, int cls = 1) {
  SequenceTracks s;
  s.name = "s";
  s.num_frames = frames;
  for (int f = 1; f <= frames; ++f) s.rows.push_back({f, id, at(5.0 * f, y, cls)});
  return s;
}

SequenceTracks merge(const SequenceTracks& a, const SequenceTracks& b) {
  SequenceTracks s = a;
  s.rows.insert(s.rows.end(), b.rows.begin(), b.rows.end());
  std::sort(s.rows.begin(), s.rows.end(), [](auto& x, auto& y) {
    return x.frame != y.frame ? x.frame < y.frame : x.track_id < y.track_id;
  });
  s.num_frames = std::max(a.num_frames, b.num_frames);
  return s;
}

SequenceTracks relabel(SequenceTracks s, int offset) {
  for (auto& r : s.rows) r.track_id = 100 - r.track_id + offset;
  return s;
}

TrackingResult wrap(SequenceTracks s, const std::string& name = "s") {
  s.name = name;
  TrackingResult r;
  r.sequences.push_back(std::move(s));
  return r;
}

}  // namespace

TEST(Clear, PerfectPrediction) {
  const auto gt = merge(line(1, 8), line(2, 8, 40));
  const auto r = clear_mot(gt, gt);
  EXPECT_EQ(r.mota, 1.0);
  EXPECT_EQ(r.fp + r.fn + r.idsw, 0);
}

TEST(Clear, TenGtOneMissOneFalseAlarm) {
  const auto gt = line(1, 10);
  SequenceTracks pred = gt;
  pred.rows.erase(pred.rows.begin() + 4);
  pred.rows.push_back({7, 9, at(200, 200)});
  std::sort(pred.rows.begin(), pred.rows.end(), [](auto& a, auto& b) { return a.frame < b.frame; });
  const auto r = clear_mot(gt, pred);
  EXPECT_EQ(r.fn, 1);
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.idsw, 0);
  EXPECT_EQ(r.mota, 0.8);
  EXPECT_EQ(100.0 * r.mota, 80.0);
}

TEST(Clear, IdSwitchCounted) {
  const auto gt = line(1, 6);
  SequenceTracks pred = gt;
  for (auto& r : pred.rows)
    if (r.frame > 3) r.track_id = 2;
  const auto r = clear_mot(gt, pred);
  EXPECT_EQ(r.idsw, 1);
  EXPECT_NEAR(r.mota, 1.0 - 1.0 / 6.0, 1e-15);
}

TEST(Clear, NegativeMotaIsNotClamped) {
  const auto gt = line(1, 2);
  SequenceTracks pred;
  pred.num_frames = 2;
  for (int f = 1; f <= 2; ++f)
    for (int k = 0; k < 3; ++k) pred.rows.push_back({f, k + 1, at(100 + 20 * k, 100)});
  EXPECT_EQ(clear_mot(gt, pred).mota, -3.0);
}

TEST(Identity, Examples) {
  const auto gt = merge(line(1, 10), line(2, 10, 40));
  EXPECT_EQ(idf1(gt, gt), 1.0);
  SequenceTracks empty;
  empty.num_frames = 10;
  EXPECT_EQ(idf1(gt, empty), 0.0);
  // ids swapped from frame 6 on
  SequenceTracks swapped = gt;
  for (auto& r : swapped.rows)
    if (r.frame > 5) r.track_id = 3 - r.track_id;
  EXPECT_DOUBLE_EQ(idf1(gt, swapped), 0.5);
  EXPECT_DOUBLE_EQ(oracle::brute_force_idf1(oracle::tiny_from(gt, swapped, 10)), 0.5);
}

TEST(Hota, PerfectPrediction) {
  const auto gt = merge(line(1, 5), line(2, 5, 40));
  const auto h = hota(gt, gt);
  EXPECT_NEAR(h.hota, 1.0, 1e-12);
  EXPECT_NEAR(h.deta, 1.0, 1e-12);
  EXPECT_NEAR(h.assa, 1.0, 1e-12);
}

TEST(Hota, FreshIdsHurtAssociationOnly) {
  const auto gt = line(1, 6);
  SequenceTracks pred = gt;
  for (auto& r : pred.rows) r.track_id = r.frame;
  const auto h = hota(gt, pred);
  EXPECT_NEAR(h.deta, 1.0, 1e-12);
  EXPECT_LT(h.assa, 1.0);
  EXPECT_NEAR(h.assa, 1.0 / 6.0, 1e-12);
}

TEST(Oracles, HotaAndIdf1MatchBruteForce) {
  KeyedRng rng(77);
  for (int t = 0; t < 300; ++t) {
    const auto [gt, pred] = oracle::tiny_instance(rng);
    const auto tiny = oracle::tiny_from(gt, pred, gt.num_frames);
    const auto want = oracle::brute_force_hota(tiny);
    const auto got = hota(gt, pred);
    if (gt.rows.empty()) continue;
    EXPECT_NEAR(got.hota, want.hota, 1e-9) << "instance " << t;
    EXPECT_NEAR(got.deta, want.deta, 1e-9) << "instance " << t;
    EXPECT_NEAR(got.assa, want.assa, 1e-9) << "instance " << t;
    EXPECT_NEAR(idf1(gt, pred), oracle::brute_force_idf1(tiny), 1e-12) << "instance " << t;
  }
}

TEST(Invariance, PredictedIdRelabeling) {
  KeyedRng rng(78);
  for (int t = 0; t < 50; ++t) {
    const auto [gt, pred] = oracle::tiny_instance(rng);
    if (gt.rows.empty()) continue;
    const auto p2 = relabel(pred, 7);
    EXPECT_EQ(clear_mot(gt, pred).mota, clear_mot(gt, p2).mota);
    EXPECT_NEAR(idf1(gt, pred), idf1(gt, p2), 1e-12);
    EXPECT_NEAR(hota(gt, pred).hota, hota(gt, p2).hota, 1e-12);
  }
}

TEST(Ranges, MetricsBounded) {
  KeyedRng rng(79);
  for (int t = 0; t < 100; ++t) {
    const auto [gt, pred] = oracle::tiny_instance(rng);
    if (gt.rows.empty()) continue;
    const auto v = evaluate(wrap(gt), wrap(pred)).overall;
    EXPECT_LE(v.mota, 1.0);
    for (double x : {v.hota, v.deta, v.assa, v.idf1}) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(IgnoreRegions, MatchedPredictionsAreDropped) {
  SequenceTracks gt = line(1, 4);
  gt.rows.push_back({2, 5, at(100, 100, 1, 0.0)});
  std::sort(gt.rows.begin(), gt.rows.end(), [](auto& a, auto& b) { return a.frame < b.frame; });
  SequenceTracks pred = line(1, 4);
  pred.rows.push_back({2, 9, at(101, 100)});
  std::sort(pred.rows.begin(), pred.rows.end(), [](auto& a, auto& b) { return a.frame < b.frame; });
  const auto r = clear_mot(gt, pred);
  EXPECT_EQ(r.fp, 0);
  EXPECT_EQ(r.tp, 4);
  EXPECT_EQ(r.mota, 1.0);
}

TEST(Evaluate, SelfEvaluationIsPerfectOnSyntheticSets) {
  BenchmarkSpec b;
  b.frames_per_sequence = 12;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto set = make_split(b, DomainStyle::target(), 3, seed, "x");
    const auto rep = evaluate(set.gt, set.gt);
    for (const auto* v : {&rep.average, &rep.overall}) {
      EXPECT_NEAR(100 * v->hota, 100.0, 1e-9);
      EXPECT_NEAR(100 * v->mota, 100.0, 1e-9);
      EXPECT_NEAR(100 * v->idf1, 100.0, 1e-9);
      EXPECT_NEAR(100 * v->deta, 100.0, 1e-9);
      EXPECT_NEAR(100 * v->assa, 100.0, 1e-9);
    }
  }
}

TEST(Evaluate, MissingSequenceThrows) {
  const auto gt = wrap(line(1, 3), "a");
  EXPECT_THROW(evaluate(gt, wrap(line(1, 3), "b")), SequenceMismatch);
  EXPECT_THROW(evaluate(gt, TrackingResult{}), SequenceMismatch);
}

TEST(Aggregate, Modes) {
  // class 1: perfect, class 2: everything missed; equal gt counts
  const auto gt = merge(line(1, 4, 0, 1), line(2, 4, 40, 2));
  const auto pred = line(1, 4, 0, 1);
  const auto rep = evaluate(wrap(gt), wrap(pred), {1, 2});
  ASSERT_EQ(rep.classes.size(), 2u);
  EXPECT_EQ(rep.classes[0].values.mota, 1.0);
  EXPECT_EQ(rep.classes[1].values.mota, 0.0);
  EXPECT_EQ(rep.average.mota, 0.5);
  EXPECT_EQ(rep.overall.mota, 0.5);

  // one class: both modes agree
  const auto one = evaluate(wrap(gt), wrap(pred), {1});
  EXPECT_EQ(one.average.mota, one.overall.mota);
  EXPECT_EQ(one.average.hota, one.overall.hota);

  // unequal gt counts: pooled differs from the mean
  const auto gt2 = merge(line(1, 8, 0, 1), line(2, 2, 40, 2));
  const auto pred2 = line(1, 8, 0, 1);
  const auto rep2 = evaluate(wrap(gt2), wrap(pred2), {1, 2});
  EXPECT_EQ(rep2.average.mota, 0.5);
  EXPECT_DOUBLE_EQ(rep2.overall.mota, 0.8);
}

TEST(Aggregate, UndefinedClassesSkipped) {
  const auto gt = line(1, 4, 0, 1);
  const auto rep = evaluate(wrap(gt), wrap(gt), {1, 3});
  EXPECT_FALSE(rep.classes[1].values.defined);
  EXPECT_TRUE(std::isnan(rep.classes[1].values.hota));
  EXPECT_EQ(rep.average.mota, 1.0);
}

TEST(Report, JsonRoundTrip) {
  KeyedRng rng(80);
  const auto [gt, pred] = oracle::tiny_instance(rng, 3, 5);
  const auto rep = evaluate(wrap(gt), wrap(pred), {1, 2});
  const std::string text = rep.to_json();
  const auto j = nlohmann::json::parse(text);
  EXPECT_TRUE(j["per_class"].is_array());
  EXPECT_TRUE(j["average"]["HOTA"].is_null() || j["average"]["HOTA"].is_number());
  const auto back = MetricsReport::from_json(text);
  EXPECT_EQ(back.to_json(), text);
  EXPECT_EQ(back.class_ids, rep.class_ids);
}

#include <gtest/gtest.h>

#include <set>

#include "darthkit/errors.hpp"
#include "darthkit/metrics.hpp"
#include "darthkit/synthbench.hpp"

using namespace darthkit;

TEST(Generate, NoObjectsGivesBackgroundOnly) {
  SceneSpec spec;
  spec.num_objects = 0;
  spec.num_frames = 3;
  const auto v = generate(spec, DomainStyle::source());
  EXPECT_TRUE(v.gt.rows.empty());
  ASSERT_EQ(v.video.frames.size(), 3u);
  const auto bg = static_cast<std::uint8_t>(DomainStyle::source().background_intensity);
  for (const auto& f : v.video.frames)
    for (auto px : f.data) EXPECT_EQ(px, bg);
}

TEST(Generate, SameSeedSameBytes) {
  SceneSpec spec;
  spec.num_frames = 5;
  spec.seed = 42;
  const auto a = generate(spec, DomainStyle::target());
  const auto b = generate(spec, DomainStyle::target());
  EXPECT_EQ(a.video.frames, b.video.frames);
  EXPECT_EQ(a.gt, b.gt);
  spec.seed = 43;
  EXPECT_NE(generate(spec, DomainStyle::target()).video.frames, a.video.frames);
}

// Single-object scenes on a flat background: every pixel that differs from the
// background belongs to the shape.
TEST(Generate, BoxesContainTheirShapePixels) {
  const DomainStyle style = DomainStyle::source();
  const auto bg = static_cast<int>(style.background_intensity);
  int frames_checked = 0;
  for (std::uint64_t seed = 0; frames_checked < 100; ++seed) {
    SceneSpec spec;
    spec.num_objects = 1;
    spec.num_frames = 5;
    spec.seed = seed;
    const auto v = generate(spec, style);
    for (int f = 0; f < spec.num_frames && frames_checked < 100; ++f, ++frames_checked) {
      const auto rows = rows_at(v.gt, f + 1);
      ASSERT_EQ(rows.size(), 1u);
      const auto& b = rows[0].box;
      const Image& img = v.video.frames[f];
      int total = 0, inside = 0;
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          bool fg = false;
          for (int c = 0; c < 3; ++c) fg |= img.at(y, x, c) != bg;
          if (!fg) continue;
          ++total;
          if (x + 0.5 >= b.x1 && x + 0.5 <= b.x2 && y + 0.5 >= b.y1 && y + 0.5 <= b.y2) ++inside;
        }
      ASSERT_GT(total, 0);
      EXPECT_GE(static_cast<double>(inside) / total, 0.9) << "seed " << seed << " frame " << f;
    }
  }
}

TEST(Generate, IdsStableAndCentersInside) {
  SceneSpec spec;
  spec.num_objects = 4;
  spec.num_frames = 60;
  spec.seed = 9;
  const auto objs = sample_objects(spec, DomainStyle::source().object_palette.size());
  ASSERT_EQ(objs.size(), 4u);
  for (const auto& o : objs)
    for (int f = 0; f < spec.num_frames; ++f) {
      const auto c = object_center(o, f, spec.width, spec.height);
      EXPECT_GE(c[0], 0.0);
      EXPECT_LE(c[0], spec.width);
      EXPECT_GE(c[1], 0.0);
      EXPECT_LE(c[1], spec.height);
    }
  const auto v = generate(spec, DomainStyle::source());
  std::set<int> ids;
  for (const auto& r : v.gt.rows) {
    ids.insert(r.track_id);
    EXPECT_GE(r.box.class_id, 1);
    EXPECT_LE(r.box.class_id, kNumShapeClasses);
  }
  EXPECT_LE(ids.size(), 4u);
}

TEST(Generate, TargetStyleChangesPixelsNotLabels) {
  SceneSpec spec;
  spec.num_frames = 4;
  spec.seed = 5;
  const auto s = generate(spec, DomainStyle::source());
  const auto t = generate(spec, DomainStyle::target());
  EXPECT_NE(s.video.frames, t.video.frames);
  // Blur can widen the visible extent slightly; ids, classes and frames agree.
  ASSERT_EQ(s.gt.rows.size(), t.gt.rows.size());
  for (std::size_t i = 0; i < s.gt.rows.size(); ++i) {
    EXPECT_EQ(s.gt.rows[i].track_id, t.gt.rows[i].track_id);
    EXPECT_EQ(s.gt.rows[i].box.class_id, t.gt.rows[i].box.class_id);
  }
}

TEST(ShiftMagnitude, Properties) {
  const auto a = DomainStyle::source();
  const auto b = DomainStyle::target();
  EXPECT_EQ(shift_magnitude(a, a), 0.0);
  EXPECT_GT(shift_magnitude(a, b), 0.0);
  EXPECT_EQ(shift_magnitude(a, b), shift_magnitude(b, a));
  double prev = 0.0;
  for (double bg : {190.0, 170.0, 120.0, 60.0}) {
    auto c = a;
    c.background_intensity = bg;
    const double d = shift_magnitude(a, c);
    EXPECT_GT(d, prev);
    prev = d;
  }
  prev = 0.0;
  for (double sigma : {1.0, 5.0, 20.0}) {
    auto c = a;
    c.noise_sigma = sigma;
    EXPECT_GT(shift_magnitude(a, c), prev);
    prev = shift_magnitude(a, c);
  }
  prev = 0.0;
  for (double hue : {10.0, 30.0, 90.0}) {
    auto c = a;
    c.global_hue_shift = hue;
    EXPECT_GT(shift_magnitude(a, c), prev);
    prev = shift_magnitude(a, c);
  }
}

TEST(Split, NamedSequencesWithPerfectGroundTruth) {
  BenchmarkSpec b;
  b.frames_per_sequence = 6;
  const auto set = make_split(b, DomainStyle::target(), 3, 11, "target");
  ASSERT_EQ(set.videos.sequences.size(), 3u);
  EXPECT_EQ(set.videos.sequences[0].name, "target-00");
  EXPECT_EQ(set.gt.sequences[2].name, "target-02");
  EXPECT_EQ(set.videos.num_frames(), 18u);
  const auto rep = evaluate(set.gt, set.gt);
  EXPECT_DOUBLE_EQ(rep.overall.hota, 1.0);
  EXPECT_DOUBLE_EQ(rep.overall.mota, 1.0);
  EXPECT_DOUBLE_EQ(rep.overall.idf1, 1.0);
}

TEST(Split, SourceAndTargetShareScenes) {
  BenchmarkSpec b;
  b.frames_per_sequence = 3;
  const auto s = make_split(b, DomainStyle::source(), 2, 7, "a");
  const auto t = make_split(b, DomainStyle::target(), 2, 7, "a");
  for (int i = 0; i < 2; ++i) EXPECT_EQ(s.gt.sequences[i].rows.size(), t.gt.sequences[i].rows.size());
}

TEST(Split, RejectsBadObjectRange) {
  BenchmarkSpec b;
  b.min_objects = 5;
  b.max_objects = 2;
  EXPECT_THROW(make_split(b, DomainStyle::source(), 1, 0, "x"), ConfigError);
}

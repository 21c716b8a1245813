#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "darthkit/dataset.hpp"

namespace darthkit {

enum ShapeClass : int { kCircle = 1, kSquare = 2, kTriangle = 3 };
inline constexpr int kNumShapeClasses = 3;

struct DomainStyle {
  double background_intensity = 200.0;
  double noise_sigma = 0.0;
  double global_hue_shift = 0.0;  // degrees
  std::vector<std::array<std::uint8_t, 3>> object_palette;
  double blur_radius = 0.0;  // box-blur radius in pixels, fractional part ignored

  static DomainStyle source();
  static DomainStyle target();
  friend bool operator==(const DomainStyle&, const DomainStyle&) = default;
};

/// center(t) = start + velocity * t + amplitude * sin(2 pi freq t + phase),
/// folded back into the frame so the center never leaves it.
struct ObjectMotion {
  int class_id = kCircle;
  int color_index = 0;
  double radius = 10.0;
  double x0 = 0.0, y0 = 0.0;
  double vx = 0.0, vy = 0.0;
  double amp_x = 0.0, amp_y = 0.0;
  double freq = 0.0, phase = 0.0;

  friend bool operator==(const ObjectMotion&, const ObjectMotion&) = default;
};

struct SceneSpec {
  int num_objects = 3;
  int num_frames = 40;
  int width = 128;
  int height = 96;
  double min_radius = 8.0;
  double max_radius = 12.0;
  double max_speed = 1.5;
  std::uint64_t seed = 0;
  /// Explicit objects; when empty, `num_objects` are drawn from `seed`.
  std::vector<ObjectMotion> objects;
};

struct SyntheticVideo {
  VideoSequence video;
  SequenceTracks gt;
};

std::vector<ObjectMotion> sample_objects(const SceneSpec& spec, std::size_t palette_size);
std::array<double, 2> object_center(const ObjectMotion& m, int frame_index, int width, int height);

/// Renders the scene. Later objects occlude earlier ones; ground truth is the
/// tight box of each object's visible pixels and fully hidden objects get no
/// row in that frame.
SyntheticVideo generate(const SceneSpec& spec, const DomainStyle& style);

/// Weighted L1 distance between styles; zero iff the styles are equal.
double shift_magnitude(const DomainStyle& a, const DomainStyle& b);

struct BenchmarkSpec {
  int source_sequences = 24;
  int target_sequences = 8;
  int frames_per_sequence = 20;
  int min_objects = 2;
  int max_objects = 4;
  int width = 128;
  int height = 96;
};

/// Sequences named `<prefix>-NN`, each with its own scene seed derived from
/// `seed`. Source and target draw scenes from the same distribution.
LabeledVideoSet make_split(const BenchmarkSpec& spec, const DomainStyle& style, int num_sequences,
                           std::uint64_t seed, const std::string& prefix);

}  // namespace darthkit

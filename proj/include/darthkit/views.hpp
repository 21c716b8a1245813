#pragma once

#include <array>
#include <cstdint>

#include "darthkit/geometry.hpp"
#include "darthkit/image.hpp"
#include "darthkit/rng.hpp"

namespace darthkit {

/// Stages of the photometric distortion sequence, in application order.
enum PhotometricStage : int {
  kBrightness = 0,
  kContrastFirst = 1,
  kToHsv = 2,
  kSaturation = 3,
  kHue = 4,
  kToRgb = 5,
  kContrastLast = 6,
  kSwapChannels = 7,
};

struct PhotometricParams {
  double brightness_delta = 0.0;
  double contrast_factor = 1.0;
  double saturation_factor = 1.0;
  double hue_delta = 0.0;  // degrees
  std::array<int, 3> swap_channels{0, 1, 2};
  std::array<bool, 8> apply_flags{};

  static PhotometricParams none() { return {}; }
  bool any() const noexcept;
  friend bool operator==(const PhotometricParams&, const PhotometricParams&) = default;
};

struct AugConfig {
  // Which transforms are active per view. The default is geometric teacher,
  // photometric student, geometric + photometric contrastive.
  bool teacher_geometric = true;
  bool student_photometric = true;
  bool contrastive_geometric = true;
  bool contrastive_photometric = true;

  int base_width = 128;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double flip_prob = 0.5;
  int pad_divisor = 8;

  double stage_prob = 0.5;
  double brightness_delta = 32.0;
  double contrast_min = 0.5;
  double contrast_max = 1.5;
  double saturation_min = 0.5;
  double saturation_max = 1.5;
  double hue_delta = 18.0;

  /// Every transform disabled; views reproduce the input.
  static AugConfig identity();
};

struct ViewBundle {
  Image image_teacher;
  Image image_student;
  Image image_contrastive;
  WarpRecord warp_teacher;
  WarpRecord warp_contrastive;
  PhotometricParams photo_student;
  PhotometricParams photo_contrastive;
  std::uint64_t seed = 0;

  friend bool operator==(const ViewBundle&, const ViewBundle&) = default;
};

WarpRecord sample_geometric(KeyedRng& rng, const AugConfig& cfg, int src_width, int src_height);
PhotometricParams sample_photometric(KeyedRng& rng, const AugConfig& cfg);

/// Applies the ordered eight-stage distortion; each stage runs only when its
/// flag is set. Work happens in floating point with a single final rounding.
Image apply_photometric(const Image& img, const PhotometricParams& p);

/// Teacher view = geometric(img); student = photometric(teacher);
/// contrastive = photometric(geometric(img)) with independent draws. All
/// images are zero-padded on the bottom/right to `cfg.pad_divisor`.
ViewBundle make_views(const Image& img, std::uint64_t seed, const AugConfig& cfg);

/// Seed for the views of the `index`-th frame of a run.
std::uint64_t view_seed(std::uint64_t global_seed, std::uint64_t index) noexcept;

}  // namespace darthkit

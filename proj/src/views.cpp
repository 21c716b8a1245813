#include "darthkit/views.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "color.hpp"

namespace darthkit {

bool PhotometricParams::any() const noexcept {
  return std::any_of(apply_flags.begin(), apply_flags.end(), [](bool b) { return b; });
}

AugConfig AugConfig::identity() {
  AugConfig cfg;
  cfg.teacher_geometric = false;
  cfg.student_photometric = false;
  cfg.contrastive_geometric = false;
  cfg.contrastive_photometric = false;
  cfg.pad_divisor = 1;
  return cfg;
}

WarpRecord sample_geometric(KeyedRng& rng, const AugConfig& cfg, int src_width, int src_height) {
  WarpRecord w = WarpRecord::identity(src_width, src_height);
  const double rel = rng.uniform(cfg.scale_min, cfg.scale_max);
  const double target_w = rel * cfg.base_width;
  w.scale_x = target_w / src_width;
  w.scale_y = w.scale_x;  // aspect preserved
  w.flip_h = rng.bernoulli(cfg.flip_prob);
  const int scaled_w = std::max(1, static_cast<int>(std::lround(w.scaled_width())));
  const int scaled_h = std::max(1, static_cast<int>(std::lround(w.scaled_height())));
  w.out_width = std::min(scaled_w, cfg.base_width);
  w.out_height = scaled_h;
  const int slack = scaled_w - w.out_width;
  w.crop_offset_x = slack > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(slack) + 1)) : 0;
  return w;
}

PhotometricParams sample_photometric(KeyedRng& rng, const AugConfig& cfg) {
  PhotometricParams p;
  auto& f = p.apply_flags;
  if (rng.bernoulli(cfg.stage_prob)) {
    f[kBrightness] = true;
    p.brightness_delta = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta);
  }
  // The contrast stage runs either before the HSV block or after it.
  const bool contrast_first = rng.bernoulli(0.5);
  if (rng.bernoulli(cfg.stage_prob)) {
    f[contrast_first ? kContrastFirst : kContrastLast] = true;
    p.contrast_factor = rng.uniform(cfg.contrast_min, cfg.contrast_max);
  }
  if (rng.bernoulli(cfg.stage_prob)) {
    f[kSaturation] = true;
    p.saturation_factor = rng.uniform(cfg.saturation_min, cfg.saturation_max);
  }
  if (rng.bernoulli(cfg.stage_prob)) {
    f[kHue] = true;
    p.hue_delta = rng.uniform(-cfg.hue_delta, cfg.hue_delta);
  }
  f[kToHsv] = f[kToRgb] = f[kSaturation] || f[kHue];
  if (rng.bernoulli(cfg.stage_prob)) {
    static constexpr std::array<std::array<int, 3>, 6> kPerms{{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    f[kSwapChannels] = true;
    p.swap_channels = kPerms[rng.below(kPerms.size())];
  }
  return p;
}

Image apply_photometric(const Image& img, const PhotometricParams& p) {
  if (!p.any()) return img;
  const auto& f = p.apply_flags;
  Image out = img;
  const int n = img.width * img.height;
  const int ch = img.channels;
  std::vector<double> px(static_cast<std::size_t>(ch));
  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * ch;
    for (int c = 0; c < ch; ++c) px[c] = img.data[base + c];
    if (f[kBrightness]) for (auto& v : px) v += p.brightness_delta;
    if (f[kContrastFirst]) for (auto& v : px) v *= p.contrast_factor;
    if (ch == 3 && (f[kToHsv] || f[kSaturation] || f[kHue])) {
      double h, s, v;
      rgb_to_hsv(std::clamp(px[0], 0.0, 255.0), std::clamp(px[1], 0.0, 255.0),
                 std::clamp(px[2], 0.0, 255.0), h, s, v);
      if (f[kSaturation]) s = std::clamp(s * p.saturation_factor, 0.0, 1.0);
      if (f[kHue]) h += p.hue_delta;
      hsv_to_rgb(h, s, v, px[0], px[1], px[2]);
    }
    if (f[kContrastLast]) for (auto& v : px) v *= p.contrast_factor;
    if (ch == 3 && f[kSwapChannels]) {
      const double a = px[p.swap_channels[0]], b = px[p.swap_channels[1]], c = px[p.swap_channels[2]];
      px[0] = a;
      px[1] = b;
      px[2] = c;
    }
    for (int c = 0; c < ch; ++c) {
      out.data[base + c] = static_cast<std::uint8_t>(std::clamp(std::lround(px[c]), 0L, 255L));
    }
  }
  return out;
}

std::uint64_t view_seed(std::uint64_t global_seed, std::uint64_t index) noexcept {
  return mix_key(global_seed, index);
}

ViewBundle make_views(const Image& img, std::uint64_t seed, const AugConfig& cfg) {
  ViewBundle vb;
  vb.seed = seed;
  KeyedRng teacher_rng(seed, 0, StreamRole::kTeacherView);
  KeyedRng student_rng(seed, 0, StreamRole::kStudentView);
  KeyedRng contrast_rng(seed, 0, StreamRole::kContrastiveView);

  vb.warp_teacher = cfg.teacher_geometric ? sample_geometric(teacher_rng, cfg, img.width, img.height)
                                          : WarpRecord::identity(img.width, img.height);
  vb.warp_contrastive = cfg.contrastive_geometric
                            ? sample_geometric(contrast_rng, cfg, img.width, img.height)
                            : WarpRecord::identity(img.width, img.height);
  vb.photo_student = cfg.student_photometric ? sample_photometric(student_rng, cfg) : PhotometricParams{};
  vb.photo_contrastive =
      cfg.contrastive_photometric ? sample_photometric(contrast_rng, cfg) : PhotometricParams{};

  const Image teacher = vb.warp_teacher.is_identity() ? img : warp_image(img, vb.warp_teacher);
  const Image student = apply_photometric(teacher, vb.photo_student);
  const Image contrast_geo =
      vb.warp_contrastive.is_identity() ? img : warp_image(img, vb.warp_contrastive);
  const Image contrastive = apply_photometric(contrast_geo, vb.photo_contrastive);

  vb.image_teacher = pad_to_multiple(teacher, cfg.pad_divisor);
  vb.image_student = pad_to_multiple(student, cfg.pad_divisor);
  vb.image_contrastive = pad_to_multiple(contrastive, cfg.pad_divisor);
  return vb;
}

}  // namespace darthkit

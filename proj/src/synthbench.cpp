#include "darthkit/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "color.hpp"
#include "darthkit/errors.hpp"
#include "darthkit/rng.hpp"

namespace darthkit {

namespace {

const std::vector<std::array<std::uint8_t, 3>>& default_palette() {
  static const std::vector<std::array<std::uint8_t, 3>> kPalette{
      {230, 40, 40}, {40, 200, 60}, {50, 80, 230}, {240, 200, 30}, {200, 50, 210}, {30, 200, 210}};
  return kPalette;
}

// Reflects x into [lo, hi].
double fold(double x, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double t = std::fmod(x - lo, 2.0 * span);
  if (t < 0.0) t += 2.0 * span;
  return lo + (t <= span ? t : 2.0 * span - t);
}

bool inside_shape(int cls, double px, double py, double cx, double cy, double r) {
  const double dx = px - cx, dy = py - cy;
  switch (cls) {
    case kCircle:
      return dx * dx + dy * dy <= r * r;
    case kSquare: {
      const double h = r * 0.85;  // similar area to the circle
      return std::abs(dx) <= h && std::abs(dy) <= h;
    }
    case kTriangle: {
      // Apex up, base at cy + r, half-width r at the base.
      if (dy < -r || dy > r) return false;
      const double half = r * (dy + r) / (2.0 * r);
      return std::abs(dx) <= half;
    }
    default:
      return false;
  }
}

std::array<std::uint8_t, 3> shift_hue(const std::array<std::uint8_t, 3>& c, double degrees) {
  if (degrees == 0.0) return c;
  double h, s, v, r, g, b;
  rgb_to_hsv(c[0], c[1], c[2], h, s, v);
  hsv_to_rgb(h + degrees, s, v, r, g, b);
  auto q = [](double x) { return static_cast<std::uint8_t>(std::clamp(std::lround(x), 0L, 255L)); };
  return {q(r), q(g), q(b)};
}

void box_blur(std::vector<double>& buf, int w, int h, int radius) {
  if (radius <= 0) return;
  std::vector<double> tmp(buf.size());
  for (int pass = 0; pass < 2; ++pass) {
    const bool horizontal = pass == 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          int cnt = 0;
          for (int d = -radius; d <= radius; ++d) {
            const int xx = horizontal ? x + d : x;
            const int yy = horizontal ? y : y + d;
            if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
            acc += buf[(static_cast<std::size_t>(yy) * w + xx) * 3 + c];
            ++cnt;
          }
          tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc / cnt;
        }
      }
    }
    buf.swap(tmp);
  }
}

}  // namespace

DomainStyle DomainStyle::source() {
  DomainStyle s;
  s.background_intensity = 200.0;
  s.noise_sigma = 0.0;
  s.global_hue_shift = 0.0;
  s.object_palette = default_palette();
  return s;
}

DomainStyle DomainStyle::target() {
  DomainStyle s;
  s.background_intensity = 80.0;
  s.noise_sigma = 20.0;
  s.global_hue_shift = 60.0;
  s.object_palette = default_palette();
  return s;
}

std::vector<ObjectMotion> sample_objects(const SceneSpec& spec, std::size_t palette_size) {
  if (palette_size == 0) throw ConfigError("synth.palette", "object palette is empty");
  KeyedRng rng(spec.seed, 0, StreamRole::kScene);
  std::vector<int> colors(palette_size);
  for (std::size_t i = 0; i < palette_size; ++i) colors[i] = static_cast<int>(i);
  rng.shuffle(colors.begin(), colors.end());
  std::vector<ObjectMotion> out;
  for (int i = 0; i < spec.num_objects; ++i) {
    ObjectMotion m;
    m.class_id = 1 + static_cast<int>(rng.below(kNumShapeClasses));
    m.color_index = colors[static_cast<std::size_t>(i) % palette_size];
    m.radius = rng.uniform(spec.min_radius, spec.max_radius);
    m.x0 = rng.uniform(m.radius, spec.width - m.radius);
    m.y0 = rng.uniform(m.radius, spec.height - m.radius);
    const double speed = rng.uniform(0.3, 1.0) * spec.max_speed;
    const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
    m.vx = speed * std::cos(dir);
    m.vy = speed * std::sin(dir);
    m.amp_x = rng.uniform(0.0, 6.0);
    m.amp_y = rng.uniform(0.0, 6.0);
    m.freq = rng.uniform(0.02, 0.08);
    m.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    out.push_back(m);
  }
  return out;
}

std::array<double, 2> object_center(const ObjectMotion& m, int t, int width, int height) {
  const double s = std::sin(2.0 * std::numbers::pi * m.freq * t + m.phase);
  const double x = m.x0 + m.vx * t + m.amp_x * s;
  const double y = m.y0 + m.vy * t + m.amp_y * s;
  return {fold(x, 0.0, width), fold(y, 0.0, height)};
}

SyntheticVideo generate(const SceneSpec& spec, const DomainStyle& style) {
  if (spec.width <= 0 || spec.height <= 0 || spec.num_frames < 0)
    throw ConfigError("synth.frame_size", "frame size must be positive");
  if (style.object_palette.empty()) throw ConfigError("synth.palette", "object palette is empty");
  if (style.noise_sigma < 0.0) throw ConfigError("synth.noise_sigma", "noise sigma must be non-negative");
  const auto objects = spec.objects.empty() ? sample_objects(spec, style.object_palette.size()) : spec.objects;

  std::vector<std::array<std::uint8_t, 3>> colors;
  for (const auto& c : style.object_palette) colors.push_back(shift_hue(c, style.global_hue_shift));

  SyntheticVideo out;
  out.gt.num_frames = spec.num_frames;
  const int w = spec.width, h = spec.height;
  const auto pixels = static_cast<std::size_t>(w) * h;
  std::vector<int> owner(pixels);
  std::vector<double> buf(pixels * 3);
  for (int t = 0; t < spec.num_frames; ++t) {
    std::fill(owner.begin(), owner.end(), -1);
    for (std::size_t o = 0; o < objects.size(); ++o) {
      const auto& m = objects[o];
      const auto [cx, cy] = object_center(m, t, w, h);
      const int x_lo = std::max(0, static_cast<int>(std::floor(cx - m.radius - 1)));
      const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cx + m.radius + 1)));
      const int y_lo = std::max(0, static_cast<int>(std::floor(cy - m.radius - 1)));
      const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(cy + m.radius + 1)));
      for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x)
          if (inside_shape(m.class_id, x + 0.5, y + 0.5, cx, cy, m.radius))
            owner[static_cast<std::size_t>(y) * w + x] = static_cast<int>(o);
    }

    // Ground truth from the visible mask.
    std::vector<std::array<int, 4>> ext(objects.size(), {w, h, -1, -1});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int o = owner[static_cast<std::size_t>(y) * w + x];
        if (o < 0) continue;
        auto& e = ext[o];
        e[0] = std::min(e[0], x);
        e[1] = std::min(e[1], y);
        e[2] = std::max(e[2], x);
        e[3] = std::max(e[3], y);
      }
    }
    for (std::size_t o = 0; o < objects.size(); ++o) {
      const auto& e = ext[o];
      if (e[2] < 0) continue;
      TrackRow row;
      row.frame = t + 1;
      row.track_id = static_cast<int>(o) + 1;
      row.box = {static_cast<double>(e[0]), static_cast<double>(e[1]), static_cast<double>(e[2] + 1),
                 static_cast<double>(e[3] + 1), objects[o].class_id, 1.0};
      out.gt.rows.push_back(row);
    }

    for (std::size_t p = 0; p < pixels; ++p) {
      const int o = owner[p];
      for (int c = 0; c < 3; ++c)
        buf[p * 3 + c] = o < 0 ? style.background_intensity
                               : colors[static_cast<std::size_t>(objects[o].color_index) % colors.size()][c];
    }
    box_blur(buf, w, h, static_cast<int>(style.blur_radius));
    Image img(w, h, 3);
    if (style.noise_sigma > 0.0) {
      KeyedRng noise(spec.seed, static_cast<std::uint64_t>(t), StreamRole::kNoise);
      for (auto& v : buf) v += style.noise_sigma * noise.normal();
    }
    for (std::size_t i = 0; i < buf.size(); ++i)
      img.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(buf[i]), 0L, 255L));
    out.video.frames.push_back(std::move(img));
  }
  return out;
}

double shift_magnitude(const DomainStyle& a, const DomainStyle& b) {
  double hue = std::fmod(std::abs(a.global_hue_shift - b.global_hue_shift), 360.0);
  hue = std::min(hue, 360.0 - hue);
  double d = std::abs(a.background_intensity - b.background_intensity) / 255.0 +
             std::abs(a.noise_sigma - b.noise_sigma) / 50.0 + hue / 180.0 +
             std::abs(a.blur_radius - b.blur_radius) / 5.0;
  const std::size_t n = std::max(a.object_palette.size(), b.object_palette.size());
  double pal = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= a.object_palette.size() || i >= b.object_palette.size()) {
      pal += 1.0;
      continue;
    }
    for (int c = 0; c < 3; ++c)
      pal += std::abs(static_cast<double>(a.object_palette[i][c]) - b.object_palette[i][c]) / (3.0 * 255.0);
  }
  if (n > 0) d += pal / static_cast<double>(n);
  return d;
}

LabeledVideoSet make_split(const BenchmarkSpec& spec, const DomainStyle& style, int num_sequences,
                           std::uint64_t seed, const std::string& prefix) {
  if (spec.min_objects < 0 || spec.max_objects < spec.min_objects)
    throw ConfigError("synth.max_objects", "object count range is empty");
  LabeledVideoSet set;
  for (int i = 0; i < num_sequences; ++i) {
    KeyedRng rng(seed, static_cast<std::uint64_t>(i), StreamRole::kScene);
    SceneSpec scene;
    scene.width = spec.width;
    scene.height = spec.height;
    scene.num_frames = spec.frames_per_sequence;
    scene.num_objects = spec.min_objects +
                        static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_objects - spec.min_objects + 1)));
    scene.seed = rng();
    auto video = generate(scene, style);
    char name[64];
    std::snprintf(name, sizeof name, "%s-%02d", prefix.c_str(), i);
    video.video.name = name;
    video.gt.name = name;
    set.videos.sequences.push_back(std::move(video.video));
    set.gt.sequences.push_back(std::move(video.gt));
  }
  return set;
}

}  // namespace darthkit

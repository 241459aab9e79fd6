#include "evlt/scene/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace evlt::scene {
namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Seeded value noise in [0, 1] per channel, then a 3x3 box blur.
Image value_noise(int h, int w, int cell, std::uint64_t seed) {
  const int gh = h / cell + 2, gw = w / cell + 2;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(gh) * gw * 3);
  for (auto& v : lattice) v = u(rng);
  auto lat = [&](int gy, int gx, int c) { return lattice[(static_cast<std::size_t>(gy) * gw + gx) * 3 + c]; };

  Image raw(h, w, 3);
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) / cell;
    const int gy = static_cast<int>(fy);
    const double ty = smoothstep(fy - gy);
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) / cell;
      const int gx = static_cast<int>(fx);
      const double tx = smoothstep(fx - gx);
      for (int c = 0; c < 3; ++c) {
        const double top = lat(gy, gx, c) * (1 - tx) + lat(gy, gx + 1, c) * tx;
        const double bot = lat(gy + 1, gx, c) * (1 - tx) + lat(gy + 1, gx + 1, c) * tx;
        raw.at(y, x, c) = top * (1 - ty) + bot * ty;
      }
    }
  }
  Image out(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            s += raw.at(yy, xx, c);
            ++n;
          }
        out.at(y, x, c) = s / n;
      }
  return out;
}

double coverage(const ShapeSpec& s, double cx, double cy, double px, double py) {
  double sd = 0.0;
  if (s.kind == ShapeKind::disk) {
    sd = std::hypot(px - cx, py - cy) - s.radius;
  } else {
    sd = std::max(std::abs(px - cx) - s.half_width, std::abs(py - cy) - s.half_height);
  }
  return std::clamp(0.5 - sd, 0.0, 1.0);
}

void validate(const SceneSpec& spec) {
  require(spec.height > 0 && spec.width > 0, "render_clip: resolution must be positive");
  require(spec.frames >= 2, "render_clip: need at least 2 frames");
  require(spec.brightness >= 0.3 && spec.brightness <= 1.0, "render_clip: brightness must lie in [0.3, 1]");
  require(spec.background.cell > 0, "render_clip: noise cell must be positive");
  for (const auto& s : spec.shapes) {
    for (double c : s.color) require(c >= 0.0 && c <= 1.0, "render_clip: shape color outside [0, 1]");
    require(s.radius >= 0 && s.half_width >= 0 && s.half_height >= 0, "render_clip: negative shape size");
  }
  const bool flat = spec.background.kind == BackgroundKind::constant || spec.background.amplitude == 0.0;
  require(!(spec.shapes.empty() && flat),
          "render_clip: degenerate scene (no shapes over a flat background yields no events)");
}

}  // namespace

VideoClip render_clip(const SceneSpec& spec, std::uint64_t seed) {
  validate(spec);
  const int h = spec.height, w = spec.width;
  Image background(h, w, 3);
  const auto& bg = spec.background;
  if (bg.kind == BackgroundKind::noise && bg.amplitude > 0.0) {
    const Image noise = value_noise(h, w, bg.cell, seed);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          background.at(y, x, c) =
              std::clamp(bg.color[c] + bg.amplitude * (2.0 * noise.at(y, x, c) - 1.0), 0.0, 1.0);
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) background.at(y, x, c) = bg.color[c];
  }

  VideoClip clip;
  for (int f = 0; f < spec.frames; ++f) {
    Image frame = background;
    for (const auto& s : spec.shapes) {
      const double cx = s.x + s.vx * f, cy = s.y + s.vy * f;
      const double ext = (s.kind == ShapeKind::disk ? s.radius : std::max(s.half_width, s.half_height)) + 1.0;
      const int y0 = std::max(0, static_cast<int>(std::floor(cy - ext)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + ext)));
      const int x0 = std::max(0, static_cast<int>(std::floor(cx - ext)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + ext)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double a = coverage(s, cx, cy, x + 0.5, y + 0.5);
          if (a <= 0.0) continue;
          for (int c = 0; c < 3; ++c) frame.at(y, x, c) = (1.0 - a) * frame.at(y, x, c) + a * s.color[c];
        }
    }
    if (spec.brightness != 1.0)
      for (auto& v : frame.data) v *= spec.brightness;
    const double m = frame.mean();
    if (m < kMinMeanBrightness)
      throw ContractError("render_clip: frame " + std::to_string(f) + " mean brightness " +
                          std::to_string(m) + " is below 0.3");
    clip.frames.push_back(std::move(frame));
    clip.timestamps.push_back(static_cast<double>(f));
  }
  return clip;
}

SceneSpec random_scene(int height, int width, int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.frames = frames;
  spec.brightness = u(0.85, 1.0);
  spec.background.kind = BackgroundKind::noise;
  for (auto& c : spec.background.color) c = u(0.5, 0.75);
  spec.background.amplitude = u(0.1, 0.22);
  spec.background.cell = std::array<int, 3>{6, 8, 12}[static_cast<std::size_t>(u(0.0, 2.999))];
  const int count = static_cast<int>(u(2.0, 4.999));
  const double side = std::min(height, width);
  for (int i = 0; i < count; ++i) {
    ShapeSpec s;
    s.kind = u(0.0, 1.0) < 0.5 ? ShapeKind::disk : ShapeKind::rectangle;
    // Alternate dark and bright shapes so both polarities appear.
    const bool bright = (i % 2 == 0);
    for (auto& c : s.color) c = bright ? u(0.75, 1.0) : u(0.15, 0.4);
    s.x = u(0.15, 0.85) * width;
    s.y = u(0.15, 0.85) * height;
    s.vx = u(-3.0, 3.0);
    s.vy = u(-3.0, 3.0);
    s.radius = u(0.06, 0.16) * side;
    s.half_width = u(0.05, 0.15) * side;
    s.half_height = u(0.05, 0.15) * side;
    spec.shapes.push_back(s);
  }
  return spec;
}

double darken(double s, const DegradationParams& p) {
  return p.beta * std::pow(p.alpha * s, p.gamma);
}

VideoClip degrade_clip(const VideoClip& clip, const DegradationParams& params) {
  require(params.gamma > 0.0, "degrade_clip: gamma must be positive");
  require(params.sigma >= 0.0, "degrade_clip: sigma must be non-negative");
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> noise(0.0, params.sigma > 0 ? params.sigma : 1.0);
  VideoClip out;
  out.timestamps = clip.timestamps;
  for (const auto& frame : clip.frames) {
    Image low = frame;
    for (auto& v : low.data) {
      require(v >= 0.0 && v <= 1.0, "degrade_clip: input values must lie in [0, 1]");
      const double n = params.sigma > 0 ? noise(rng) : 0.0;
      v = std::clamp(darken(v, params) + n, 0.0, 1.0);
    }
    out.frames.push_back(std::move(low));
  }
  return out;
}

DegradationParams sample_degradation_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  DegradationParams p;
  p.gamma = u(2.0, 3.5);
  p.alpha = u(0.9, 1.0);
  p.beta = u(0.5, 1.0);
  p.sigma = u(0.0, 0.02);
  p.seed = rng();
  return p;
}

DegradationParams test_degradation_params(std::uint64_t noise_seed) {
  return DegradationParams{2.75, 0.95, 0.8, 0.01, noise_seed};
}

}  // namespace evlt::scene

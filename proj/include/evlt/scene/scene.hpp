#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "evlt/common/image.hpp"

namespace evlt::scene {

enum class ShapeKind { rectangle, disk };

struct ShapeSpec {
  ShapeKind kind = ShapeKind::disk;
  std::array<double, 3> color{1.0, 1.0, 1.0};
  double x = 0.0;  // center at frame 0, pixels
  double y = 0.0;
  double vx = 0.0;  // pixels per frame
  double vy = 0.0;
  double radius = 4.0;  // disk
  double half_width = 4.0;  // rectangle
  double half_height = 4.0;
};

enum class BackgroundKind { constant, noise };

struct Background {
  BackgroundKind kind = BackgroundKind::constant;
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double amplitude = 0.0;  // noise: color +- amplitude
  int cell = 8;            // noise lattice spacing in pixels
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  int frames = 5;
  std::vector<ShapeSpec> shapes;
  Background background;
  double brightness = 1.0;  // global multiplier in [0.3, 1]
};

/// Minimum per-frame mean intensity a clip must have to count as normal-light.
inline constexpr double kMinMeanBrightness = 0.3;

/// Renders N frames with timestamps 0..N-1. Shapes are composited in order
/// with a one-pixel soft edge and may leave the frame. Throws ContractError
/// for invalid specs, for degenerate scenes (no shapes over a flat
/// background) and when any frame's mean falls below kMinMeanBrightness.
VideoClip render_clip(const SceneSpec& spec, std::uint64_t seed);

/// A random textured scene with 2-4 moving shapes; always renderable.
SceneSpec random_scene(int height, int width, int frames, std::uint64_t seed);

struct DegradationParams {
  double gamma = 2.75;
  double alpha = 0.95;
  double beta = 0.8;
  double sigma = 0.01;
  std::uint64_t seed = 0;
};

/// beta * (alpha * s)^gamma, before noise and clamping.
double darken(double s, const DegradationParams& p);

/// Per pixel: clamp(beta * (alpha * s)^gamma + n, 0, 1), n ~ N(0, sigma^2)
/// drawn from a generator seeded with params.seed.
VideoClip degrade_clip(const VideoClip& clip, const DegradationParams& params);

/// gamma ~ U(2, 3.5), alpha ~ U(0.9, 1), beta ~ U(0.5, 1), sigma ~ U(0, 0.02).
DegradationParams sample_degradation_params(std::uint64_t seed);

/// The fixed evaluation preset (2.75, 0.95, 0.8, 0.01).
DegradationParams test_degradation_params(std::uint64_t noise_seed = 0);

}  // namespace evlt::scene

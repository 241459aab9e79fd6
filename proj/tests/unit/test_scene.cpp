#include <cmath>
#include <random>

#include "doctest.h"
#include "evlt/scene/scene.hpp"

using namespace evlt;
using namespace evlt::scene;

namespace {

SceneSpec white_disk(double vx, double vy) {
  SceneSpec s;
  s.height = 32;
  s.width = 48;
  s.frames = 5;
  s.background.color = {0.4, 0.4, 0.4};
  ShapeSpec d;
  d.kind = ShapeKind::disk;
  d.color = {1.0, 1.0, 1.0};
  d.x = 12.0;
  d.y = 16.0;
  d.vx = vx;
  d.vy = vy;
  d.radius = 5.0;
  s.shapes.push_back(d);
  return s;
}

}  // namespace

TEST_CASE("render: moving disk changes only a narrow band") {
  const auto spec = white_disk(2.0, 0.0);
  const VideoClip clip = render_clip(spec, 3);
  REQUIRE(clip.size() == 5);
  const double diameter = 2 * spec.shapes[0].radius;
  for (std::size_t f = 0; f + 1 < clip.size(); ++f) {
    int lo = 1 << 30, hi = -1, rows_lo = 1 << 30, rows_hi = -1;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        for (int c = 0; c < 3; ++c)
          if (clip.frames[f].at(y, x, c) != clip.frames[f + 1].at(y, x, c)) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            rows_lo = std::min(rows_lo, y);
            rows_hi = std::max(rows_hi, y);
          }
    REQUIRE(hi >= lo);
    // Horizontal motion: the changed band spans the disk's rows and the
    // swept columns only.
    CHECK(rows_hi - rows_lo + 1 <= diameter + 2);
    CHECK(hi - lo + 1 <= diameter + 2 + 2.0);
  }
}

TEST_CASE("render: static scene and determinism") {
  const VideoClip still = render_clip(white_disk(0.0, 0.0), 1);
  for (std::size_t f = 1; f < still.size(); ++f) CHECK(still.frames[f] == still.frames[0]);

  const SceneSpec r = random_scene(40, 40, 5, 11);
  CHECK(render_clip(r, 5) == render_clip(r, 5));
  CHECK_FALSE(render_clip(r, 5) == render_clip(r, 6));
  CHECK(render_clip(r, 5).timestamps == std::vector<double>{0, 1, 2, 3, 4});
}

TEST_CASE("render: rejections") {
  SceneSpec flat;
  CHECK_THROWS_AS(render_clip(flat, 0), ContractError);

  SceneSpec dark = white_disk(1, 0);
  dark.background.color = {0.05, 0.05, 0.05};
  dark.shapes[0].color = {0.1, 0.1, 0.1};
  CHECK_THROWS_WITH_AS(render_clip(dark, 0), doctest::Contains("below 0.3"), ContractError);

  SceneSpec one = white_disk(1, 0);
  one.frames = 1;
  CHECK_THROWS_AS(render_clip(one, 0), ContractError);
}

TEST_CASE("render: shapes leaving the frame are clipped, values stay in range") {
  SceneSpec s = white_disk(20.0, 9.0);
  const VideoClip c = render_clip(s, 2);
  for (const auto& f : c.frames)
    for (double v : f.data) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("random scenes are always renderable and bright enough") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const VideoClip c = render_clip(random_scene(32, 32, 5, seed), seed);
    for (const auto& f : c.frames) CHECK(f.mean() >= kMinMeanBrightness);
  }
}

TEST_CASE("degrade: preset value and fixed points") {
  DegradationParams p = test_degradation_params();
  CHECK(p.gamma == 2.75);
  CHECK(p.alpha == 0.95);
  CHECK(p.beta == 0.8);
  CHECK(p.sigma == 0.01);

  p.sigma = 0.0;
  Image one(2, 2, 3, 1.0);
  VideoClip c{{one, one}, {0, 1}};
  const VideoClip d = degrade_clip(c, p);
  // 0.8 * 0.95^2.75 evaluated by hand via exp/log.
  const double expected = 0.8 * std::exp(2.75 * std::log(0.95));
  CHECK(std::abs(d.frames[0].data[0] - expected) < 1e-12);
  CHECK(std::abs(d.frames[0].data[0] - 0.6948) < 1e-4);

  Image zero(2, 2, 3, 0.0);
  VideoClip z{{zero, zero}, {0, 1}};
  CHECK(degrade_clip(z, p).frames[1].data == zero.data);
}

TEST_CASE("degrade: identity parameters, determinism, errors") {
  const VideoClip clip = render_clip(random_scene(24, 24, 3, 4), 4);
  CHECK(degrade_clip(clip, DegradationParams{1.0, 1.0, 1.0, 0.0, 0}) == clip);

  const auto noisy = test_degradation_params(99);
  CHECK(degrade_clip(clip, noisy) == degrade_clip(clip, noisy));
  CHECK_FALSE(degrade_clip(clip, noisy) == degrade_clip(clip, test_degradation_params(100)));
  CHECK(degrade_clip(clip, noisy).frames[0].same_shape(clip.frames[0]));

  CHECK_THROWS_AS(degrade_clip(clip, DegradationParams{0.0, 1, 1, 0, 0}), ContractError);
  CHECK_THROWS_AS(degrade_clip(clip, DegradationParams{-1.0, 1, 1, 0, 0}), ContractError);
}

TEST_CASE("degrade: monotone in input when noise-free") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    DegradationParams p = sample_degradation_params(rng());
    p.sigma = 0.0;
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    Image ia(1, 1, 3, a), ib(1, 1, 3, b);
    const auto da = degrade_clip(VideoClip{{ia, ia}, {0, 1}}, p);
    const auto db = degrade_clip(VideoClip{{ib, ib}, {0, 1}}, p);
    CHECK(da.frames[0].data[0] <= db.frames[0].data[0]);
  }
}

TEST_CASE("sampled parameters stay in their training ranges") {
  double gmin = 1e9, gmax = -1e9, gsum = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto p = sample_degradation_params(static_cast<std::uint64_t>(i));
    gmin = std::min(gmin, p.gamma);
    gmax = std::max(gmax, p.gamma);
    gsum += p.gamma;
    CHECK((p.alpha >= 0.9 && p.alpha <= 1.0));
    CHECK((p.beta >= 0.5 && p.beta <= 1.0));
    CHECK((p.sigma >= 0.0 && p.sigma <= 0.02));
  }
  CHECK(gmin >= 2.0);
  CHECK(gmax <= 3.5);
  CHECK(std::abs(gsum / n - 2.75) < 0.05);
  const auto a = sample_degradation_params(42), b = sample_degradation_params(42);
  CHECK((a.gamma == b.gamma && a.alpha == b.alpha && a.beta == b.beta && a.sigma == b.sigma && a.seed == b.seed));
}

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "doctest.h"
#include "evlt/events/events.hpp"
#include "evlt/scene/scene.hpp"

using namespace evlt;
using namespace evlt::events;

namespace {

VideoClip constant_pair(double a, double b) {
  return VideoClip{{Image(2, 2, 3, a), Image(2, 2, 3, b)}, {0.0, 1.0}};
}

// Brute force: every event visits every bin of its group.
VoxelGrid naive_voxels(const EventStream& ev, int n, int h, int w, double t0, double tn) {
  VoxelGrid g(n, h, w, t0, tn);
  for (const auto& e : ev) {
    const int pol = e.p > 0 ? 0 : 1;
    const double pos = n == 1 ? 0.0 : (static_cast<double>(e.t) - t0) / (tn - t0) * (n - 1);
    for (int k = 0; k < n; ++k) {
      const double wgt = n == 1 ? 1.0 : std::max(0.0, 1.0 - std::abs(k - pos));
      g.values[(static_cast<std::size_t>(pol * n * 3 + k * 3 + e.c) * h + e.y) * w + e.x] += wgt;
    }
  }
  return g;
}

EventStream random_stream(std::mt19937_64& rng, int count, int h, int w, double t0, double tn) {
  std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1), uc(0, 2), up(0, 1);
  std::uniform_real_distribution<double> ut(t0, tn);
  EventStream ev;
  for (int i = 0; i < count; ++i)
    ev.push_back(Event{static_cast<std::uint16_t>(ux(rng)), static_cast<std::uint16_t>(uy(rng)),
                       static_cast<float>(ut(rng)), static_cast<std::uint8_t>(uc(rng)),
                       static_cast<std::int8_t>(up(rng) ? 1 : -1)});
  return ev;
}

}  // namespace

TEST_CASE("interpolate: identity factor, midpoint, count") {
  const VideoClip clip = scene::render_clip(scene::random_scene(16, 16, 5, 2), 2);
  CHECK(interpolate_frames(clip, 1) == clip);

  const VideoClip mid = interpolate_frames(constant_pair(0.0, 1.0), 2);
  REQUIRE(mid.size() == 3);
  for (double v : mid.frames[1].data) CHECK(v == 0.5);
  CHECK(mid.timestamps == std::vector<double>{0.0, 0.5, 1.0});

  const VideoClip up = interpolate_frames(clip, 4);
  REQUIRE(up.size() == 17);
  for (int j = 0; j < 5; ++j) {
    CHECK(up.frames[j * 4] == clip.frames[j]);
    CHECK(up.timestamps[j * 4] == clip.timestamps[j]);
  }
  CHECK_THROWS_AS(interpolate_frames(clip, 0), ContractError);
}

TEST_CASE("generate: threshold examples") {
  auto ev = generate_events(constant_pair(100.0 / 255, 103.0 / 255), kLowLightThreshold);
  CHECK(ev.size() == 12);
  CHECK(std::all_of(ev.begin(), ev.end(), [](const Event& e) { return e.p == 1 && e.t == 1.0f; }));
  CHECK(generate_events(constant_pair(100.0 / 255, 99.0 / 255), 2.0).empty());
  // Exactly at the threshold counts.
  CHECK(generate_events(constant_pair(100.0 / 255, 98.0 / 255), 2.0).size() == 12);
  CHECK(generate_events(constant_pair(0.3, 0.3), 0.5).empty());
  CHECK_THROWS_AS(generate_events(VideoClip{{Image(2, 2)}, {0.0}}, 2.0), ContractError);
}

TEST_CASE("generate: events are sorted by (t, y, x, c)") {
  const VideoClip clip = interpolate_frames(scene::render_clip(scene::random_scene(20, 24, 4, 9), 9), 2);
  const auto ev = generate_events(clip, 2.0);
  REQUIRE(!ev.empty());
  auto key = [](const Event& e) { return std::make_tuple(e.t, e.y, e.x, e.c); };
  CHECK(std::is_sorted(ev.begin(), ev.end(), [&](const Event& a, const Event& b) { return key(a) < key(b); }));
}

TEST_CASE("generate: normal-light threshold yields a subset") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const VideoClip clip = interpolate_frames(scene::render_clip(scene::random_scene(24, 24, 5, s), s), 4);
    const auto lo = generate_events(clip, 2.0), hi = generate_events(clip, 5.0);
    auto key = [](const Event& e) { return std::make_tuple(e.t, e.y, e.x, e.c, e.p); };
    std::set<decltype(key(lo[0]))> all;
    for (const auto& e : lo) all.insert(key(e));
    CHECK(hi.size() <= lo.size());
    for (const auto& e : hi) CHECK(all.count(key(e)) == 1);
  }
}

TEST_CASE("voxelize: kernel examples") {
  EventStream one{Event{0, 0, 0.4f, 0, 1}};
  const VoxelGrid g = voxelize(one, 2, 1, 1, 0.0, 1.0);
  REQUIRE(g.planes() == 12);
  const double pos = static_cast<double>(0.4f);
  CHECK(g.at(VoxelGrid::plane_index(0, 0, 0, 2), 0, 0) == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(g.at(VoxelGrid::plane_index(0, 1, 0, 2), 0, 0) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(g.at(VoxelGrid::plane_index(0, 1, 0, 2), 0, 0) == pos);
  double others = 0;
  for (int b = 0; b < 12; ++b)
    if (b != VoxelGrid::plane_index(0, 0, 0, 2) && b != VoxelGrid::plane_index(0, 1, 0, 2)) others += g.at(b, 0, 0);
  CHECK(others == 0.0);

  const VoxelGrid at0 = voxelize(EventStream{Event{0, 0, 2.0f, 1, -1}}, 5, 1, 1, 2.0, 6.0);
  CHECK(at0.at(VoxelGrid::plane_index(1, 0, 1, 5), 0, 0) == 1.0);

  const VoxelGrid single = voxelize(EventStream{Event{0, 0, 0.7f, 2, 1}}, 1, 1, 1, 0.0, 1.0);
  CHECK(single.at(VoxelGrid::plane_index(0, 0, 2, 1), 0, 0) == 1.0);

  const VoxelGrid empty = voxelize({}, 3, 4, 4, 0, 1);
  CHECK(std::all_of(empty.values.begin(), empty.values.end(), [](double v) { return v == 0.0; }));

  CHECK_THROWS_AS(voxelize(EventStream{Event{0, 0, 1.5f, 0, 1}}, 2, 1, 1, 0.0, 1.0), ContractError);
  CHECK_THROWS_AS(voxelize({}, 2, 1, 1, 1.0, 1.0), ContractError);
}

TEST_CASE("voxelize: matches the brute-force accumulator bit-exactly") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 5);
    const double t0 = static_cast<double>(rng() % 4), tn = t0 + 1 + static_cast<double>(rng() % 5);
    const auto ev = random_stream(rng, 200, 6, 7, t0, tn);
    CHECK(voxelize(ev, n, 6, 7, t0, tn).values == naive_voxels(ev, n, 6, 7, t0, tn).values);
  }
}

TEST_CASE("voxelize: mass conservation and linearity") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 4);
    const auto a = random_stream(rng, 40, 3, 3, 0.0, 4.0);
    const auto b = random_stream(rng, 60, 3, 3, 0.0, 4.0);
    for (const auto& e : a) {
      const auto g = voxelize(EventStream{e}, n, 3, 3, 0.0, 4.0);
      double total = 0;
      for (double v : g.values) total += v;
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
    EventStream ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    const auto gab = voxelize(ab, n, 3, 3, 0.0, 4.0);
    const auto ga = voxelize(a, n, 3, 3, 0.0, 4.0), gb = voxelize(b, n, 3, 3, 0.0, 4.0);
    for (std::size_t i = 0; i < gab.values.size(); ++i) CHECK(std::abs(gab.values[i] - ga.values[i] - gb.values[i]) < 1e-9);
  }
}

TEST_CASE("masks: thresholds are inclusive") {
  VoxelGrid g(1, 1, 3, 0, 1);
  g.values.assign(g.values.size(), 0.0);
  g.values[0] = 0.1;
  g.values[1] = 0.0999;
  const auto m = gt_voxel_mask(g);
  CHECK(m[0] == 1);
  CHECK(m[1] == 0);
  CHECK(std::count(m.begin(), m.end(), 1) == 1);

  VoxelGrid zero(2, 4, 4, 0, 1);
  const auto z = egdb_mask(zero, 4, 4);
  CHECK(std::all_of(z.values.begin(), z.values.end(), [](auto v) { return v == 0; }));

  VoxelGrid er(2, 4, 4, 0, 1);
  er.at(VoxelGrid::plane_index(0, 1, 2, 2), 2, 3) = 0.95;
  er.at(VoxelGrid::plane_index(1, 0, 0, 2), 0, 0) = 5.0;  // negative group is ignored
  er.at(VoxelGrid::plane_index(0, 0, 1, 2), 1, 1) = 0.85;
  const auto m1 = egdb_mask(er, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(m1.at(y, x) == ((y == 2 && x == 3) ? 1 : 0));
  CHECK(m1.source_height == 4);
  CHECK(m1.threshold == 0.9);

  const auto up = egdb_mask(er, 8, 8);
  CHECK(up.at(5, 7) == 1);
  CHECK(up.at(4, 6) == 1);
  CHECK(up.at(3, 7) == 0);
  CHECK_THROWS_AS(egdb_mask(er, 0, 4), ContractError);
}

TEST_CASE("masks: guidance mask is monotone in positive voxels") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.2);
  for (int trial = 0; trial < 200; ++trial) {
    VoxelGrid er(3, 5, 5, 0, 1);
    for (auto& v : er.values) v = u(rng);
    const auto before = egdb_mask(er, 5, 5);
    const int plane = VoxelGrid::plane_index(0, static_cast<int>(rng() % 3), static_cast<int>(rng() % 3), 3);
    er.at(plane, static_cast<int>(rng() % 5), static_cast<int>(rng() % 5)) += u(rng);
    const auto after = egdb_mask(er, 5, 5);
    for (std::size_t i = 0; i < before.values.size(); ++i) CHECK(after.values[i] >= before.values[i]);
  }
}

TEST_CASE("clip_to_voxels: a moving scene produces events in both polarities") {
  const VideoClip clip = scene::render_clip(scene::random_scene(32, 32, 5, 3), 3);
  const VoxelGrid g = clip_to_voxels(clip, kNormalLightThreshold);
  CHECK(g.bins == 5);
  double pos = 0, neg = 0;
  const std::size_t half = g.values.size() / 2;
  for (std::size_t i = 0; i < half; ++i) pos += g.values[i];
  for (std::size_t i = half; i < g.values.size(); ++i) neg += g.values[i];
  CHECK(pos > 0);
  CHECK(neg > 0);
}

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "evlt/net/model.hpp"
#include "evlt/numgrid/ops.hpp"

using namespace evlt;
using namespace evlt::net;
using numgrid::backward;

namespace {

Tensor<double> rand_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numgrid::shape_numel(s));
  for (auto& x : v) x = u(rng);
  return Tensor<double>(std::move(s), std::move(v));
}

ModelConfig small_config(int c = 2, int frames = 2) {
  ModelConfig cfg;
  cfg.channels = c;
  cfg.frames = frames;
  cfg.heads = 2;
  return cfg;
}

// Pushes every parameter away from the near-zero init so branches differ
// visibly.
void scramble(ParamTree<double>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.4);
  for (const auto& name : p.names())
    for (auto& v : p.at(name).mutable_data()) v += n(rng);
}

bool same(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

Tensor<double> half(const Tensor<double>& t, bool second) {
  const std::size_t c = t.dim(0) / 2;
  return numgrid::slice(t, 0, second ? c : 0, second ? 2 * c : c).detach();
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.patch = 5;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = ModelConfig{};
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = ModelConfig{};
  cfg.channels = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  CHECK(cfg.planes() == 30);
  CHECK(ModelConfig{}.patches() == 16);
  CHECK(parse_guidance("none") == Guidance::none);
  CHECK(std::string(guidance_name(Guidance::unmasked)) == "unmasked");
  CHECK_THROWS_AS(parse_guidance("half"), ContractError);
}

TEST_CASE("initialization is seeded Gaussian with zero biases") {
  const auto cfg = ModelConfig{};
  const auto a = make_params<double>(cfg, 3), b = make_params<double>(cfg, 3), c = make_params<double>(cfg, 4);
  REQUIRE(a.names() == b.names());
  double s = 0, s2 = 0;
  std::size_t n = 0;
  bool differs = false;
  for (const auto& name : a.names()) {
    const auto& t = a.at(name);
    CHECK(same(t, b.at(name)));
    differs = differs || !same(t, c.at(name));
    if (name.ends_with(".bias") || name.ends_with(".beta")) {
      for (double v : t.data()) CHECK(v == 0.0);
    } else if (name.ends_with(".gamma")) {
      for (double v : t.data()) CHECK(v == 1.0);
    } else {
      for (double v : t.data()) {
        s += v;
        s2 += v * v;
        ++n;
      }
    }
  }
  CHECK(differs);
  const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  CHECK(std::abs(mean) < 1e-3);
  CHECK(sd == doctest::Approx(0.02).epsilon(0.02));
  CHECK(a.has_prefix(kRestorePrefix));
  CHECK(a.contains("egdb.attn.q.bias"));
  CHECK_FALSE(a.contains("egdb.attn.k.bias"));
  CHECK(a.contains("eift.1.block1.f6.weight"));
  CHECK_FALSE(a.contains("eift.2.block0.f1.weight"));
}

TEST_CASE("restoration and enhancer trees are disjoint") {
  ParamTree<float> r, e;
  add_restoration_params(r, ModelConfig{}, 1);
  add_enhancer_params(e, ModelConfig{}, 1);
  for (const auto& name : r.names()) CHECK(name.starts_with(kRestorePrefix));
  for (const auto& name : e.names()) {
    CHECK_FALSE(name.starts_with(kRestorePrefix));
    CHECK_FALSE(r.contains(name));
  }
  CHECK(make_params<float>(ModelConfig{}, 1).size() == r.size() + e.size());
}

TEST_CASE("gate is exact and passes gradient only through open entries of V") {
  ParamTree<double> p;
  p.add("P", Tensor<double>(Shape{5}, std::vector<double>{0.0, 0.4999999999, 0.5, 0.5000000001, 1.0}));
  p.add("V", Tensor<double>(Shape{5}, std::vector<double>{1, 2, 3, 4, 5}));
  const auto er = gate(p.at("P"), p.at("V"));
  CHECK(er.data()[0] == 0.0);
  CHECK(er.data()[1] == 0.0);
  CHECK(er.data()[2] == 3.0);
  CHECK(er.data()[3] == 4.0);
  CHECK(er.data()[4] == 5.0);
  const auto g = backward(numgrid::sum(er), p);
  const std::vector<double> gv(g.at("V").data().begin(), g.at("V").data().end());
  CHECK(gv == std::vector<double>{0, 0, 1, 1, 1});
  for (double v : g.at("P").data()) CHECK(v == 0.0);
}

TEST_CASE("restore_events output ranges and gate consistency") {
  const auto cfg = small_config(4, 3);
  auto p = make_params<double>(cfg, 2);
  scramble(p, 5);
  std::mt19937_64 rng(9);
  const auto E = rand_tensor({std::size_t(cfg.planes()), 12, 8}, rng, 0.0, 2.0);
  const auto out = restore_events(E, p, cfg);
  REQUIRE(out.P.shape() == E.shape());
  REQUIRE(out.V.shape() == E.shape());
  REQUIRE(out.Er.shape() == E.shape());
  int open = 0;
  for (std::size_t i = 0; i < E.numel(); ++i) {
    CHECK(out.P[i] > 0.0);
    CHECK(out.P[i] < 1.0);
    CHECK(out.Er[i] == (out.P[i] >= 0.5 ? out.V[i] : 0.0));
    open += out.P[i] >= 0.5;
  }
  CHECK(open > 0);
  CHECK(open < static_cast<int>(E.numel()));
  CHECK_THROWS_AS(restore_events(rand_tensor({std::size_t(cfg.planes()), 6, 8}, rng), p, cfg), ContractError);
  CHECK_THROWS_AS(restore_events(rand_tensor({5, 8, 8}, rng), p, cfg), ContractError);
}

TEST_CASE("single-channel cross-channel transform is f1 of the main feature") {
  auto cfg = small_config(1);
  cfg.heads = 1;
  auto p = make_params<double>(cfg, 3);
  scramble(p, 8);
  std::mt19937_64 rng(4);
  const auto main = rand_tensor({1, 6, 5}, rng), mod = rand_tensor({1, 6, 5}, rng);
  const std::string pre = "eift.0.block0";
  const auto got = cct(main, modulation_features(mod, p, pre), p, pre);
  const auto want = numgrid::conv2d(main, p.at(pre + ".f1.weight"), p.at(pre + ".f1.bias"), 1, 0);
  CHECK(same(got.detach(), want.detach()));
}

TEST_CASE("channel map rows are softmax distributions") {
  const auto cfg = small_config(4);
  auto p = make_params<double>(cfg, 3);
  scramble(p, 1);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto mod = modulation_features(rand_tensor({4, 7, 9}, rng, -3, 3), p, "eift.1.block1");
    const auto m = cct_channel_map(mod, p, "eift.1.block1");
    REQUIRE(m.shape() == Shape{4, 4});
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(m[r * 4 + c] >= 0.0);
        s += m[r * 4 + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("eift module keeps shapes and swaps roles") {
  const auto cfg = small_config(3);
  auto p = make_params<double>(cfg, 3);
  scramble(p, 2);
  std::mt19937_64 rng(1);
  const auto fe = rand_tensor({3, 8, 8}, rng), fi = rand_tensor({3, 8, 8}, rng);
  const auto r = eift_module(fe, fi, p, "eift.0");
  CHECK(r.events.shape() == fe.shape());
  CHECK(r.image.shape() == fi.shape());
  // Block 0: events are the main path modulated by the image.
  const auto e1 = eift_block(fe, fi, p, "eift.0.block0");
  const auto i1 = eift_block(fi, e1, p, "eift.0.block1");
  CHECK(same(r.events.detach(), e1.detach()));
  CHECK(same(r.image.detach(), i1.detach()));
  CHECK_THROWS_AS(eift_module(fe, rand_tensor({3, 8, 7}, rng), p, "eift.0"), ContractError);
}

TEST_CASE("egdb branches see exactly their side of the mask") {
  const auto cfg = small_config(2);
  auto p = make_params<double>(cfg, 7);
  scramble(p, 3);
  std::mt19937_64 rng(2);
  const std::size_t h = 8, w = 12;
  const auto fe = rand_tensor({2, h, w}, rng), fi = rand_tensor({2, h, w}, rng);
  std::vector<std::uint8_t> mask(h * w);
  for (auto& m : mask) m = rng() % 2;
  const auto base = egdb(fe, fi, mask, p, cfg);
  REQUIRE(base.shape() == Shape{4, h, w});

  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t px = rng() % (h * w);
    auto fi2 = fi.clone();
    fi2.mutable_data()[px] += 0.75;
    fi2.mutable_data()[h * w + px] -= 0.5;
    const auto out = egdb(fe, fi2, mask, p, cfg);
    if (mask[px]) {
      CHECK(same(half(out, false), half(base, false)));  // global branch blind inside the mask
      CHECK_FALSE(same(half(out, true), half(base, true)));
    } else {
      CHECK(same(half(out, true), half(base, true)));  // local branch blind outside
      CHECK_FALSE(same(half(out, false), half(base, false)));
    }
  }

  const auto unmasked = egdb(fe, fi, {}, p, cfg);
  const auto zeros = egdb(fe, fi, std::vector<std::uint8_t>(h * w, 0), p, cfg);
  const auto ones = egdb(fe, fi, std::vector<std::uint8_t>(h * w, 1), p, cfg);
  CHECK(same(half(zeros, false), half(unmasked, false)));
  CHECK(same(half(ones, true), half(unmasked, true)));
  CHECK_THROWS_AS(egdb(fe, fi, std::vector<std::uint8_t>(5, 1), p, cfg), ContractError);
}

TEST_CASE("enhance shapes, clamping and guidance variants") {
  auto cfg = small_config(2, 3);
  auto p = make_params<double>(cfg, 1);
  scramble(p, 11);
  std::mt19937_64 rng(3);
  const auto low = rand_tensor({3, 8, 12}, rng, 0.0, 0.3);
  const auto er = rand_tensor({std::size_t(cfg.planes()), 8, 12}, rng, 0.0, 1.5);
  const auto er2 = rand_tensor({std::size_t(cfg.planes()), 8, 12}, rng, 0.0, 1.5);

  const auto full = enhance(low, er, p, cfg);
  REQUIRE(full.raw.shape() == Shape{3, 8, 12});
  for (std::size_t i = 0; i < full.raw.numel(); ++i)
    CHECK(full.image[i] == std::clamp(full.raw[i], 0.0, 1.0));
  const auto want_mask = events::egdb_mask(tensor_to_voxels(er, cfg.frames), 8, 12);
  CHECK(full.mask.values == want_mask.values);
  CHECK_FALSE(same(full.raw.detach(), enhance(low, er2, p, cfg).raw.detach()));

  cfg.guidance = Guidance::none;
  const auto none1 = enhance(low, er, p, cfg), none2 = enhance(low, er2, p, cfg);
  CHECK(same(none1.raw.detach(), none2.raw.detach()));
  for (auto v : none1.mask.values) CHECK(v == 0);

  cfg.guidance = Guidance::unmasked;
  const auto um = enhance(low, er, p, cfg);
  CHECK_FALSE(same(um.raw.detach(), full.raw.detach()));
  CHECK_FALSE(same(um.raw.detach(), none1.raw.detach()));

  cfg.guidance = Guidance::full;
  cfg.eift_modules = 0;
  CHECK(enhance(low, er, p, cfg).raw.shape() == Shape{3, 8, 12});
  CHECK_THROWS_AS(enhance(low, rand_tensor({4, 8, 12}, rng), p, cfg), ContractError);
}

TEST_CASE("enhance is deterministic in float") {
  const auto cfg = small_config(4, 5);
  const auto p = make_params<float>(cfg, 21);
  Image img(16, 16, 3, 0.1);
  img.at(3, 4, 1) = 0.3;
  events::VoxelGrid g(5, 16, 16, 0.0, 4.0);
  g.values[40] = 2.0;
  const auto a = enhance(image_to_tensor<float>(img), voxels_to_tensor<float>(g), p, cfg);
  const auto b = enhance(image_to_tensor<float>(img), voxels_to_tensor<float>(g), p, cfg);
  for (std::size_t i = 0; i < a.raw.numel(); ++i) CHECK(a.raw[i] == b.raw[i]);
}

TEST_CASE("tensor conversions round trip") {
  Image img(3, 5, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = i / 64.0;
  const auto t = image_to_tensor<double>(img);
  CHECK(t.shape() == Shape{3, 3, 5});
  CHECK(t[(1 * 3 + 2) * 5 + 4] == img.at(2, 4, 1));
  CHECK(tensor_to_image(t) == img);

  events::VoxelGrid g(3, 2, 4, -1.0, 2.0);
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = 0.25 * i;
  const auto back = tensor_to_voxels(voxels_to_tensor<double>(g), 3, -1.0, 2.0);
  CHECK(back.values == g.values);
  CHECK(back.same_layout(g));
}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <unistd.h>

#include "doctest.h"
#include "evlt/io/formats.hpp"
#include "evlt/numgrid/gradcheck.hpp"
#include "evlt/numgrid/ops.hpp"
#include "evlt/train/losses.hpp"
#include "evlt/train/synth.hpp"
#include "evlt/train/trainer.hpp"

using namespace evlt;
using namespace evlt::train;
namespace fs = std::filesystem;

namespace {

Tensor<double> rand_tensor(numgrid::Shape s, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numgrid::shape_numel(s));
  for (auto& x : v) x = u(rng);
  return Tensor<double>(std::move(s), std::move(v));
}

// Scalar loops written out independently of the tensor ops.
double oracle_stage1(const Tensor<double>& P, const Tensor<double>& Er, const Tensor<double>& G, double l1w) {
  double bce = 0, l1 = 0;
  const std::size_t n = P.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(P[i], 1e-7, 1 - 1e-7);
    const double m = G[i] >= 0.1 ? 1.0 : 0.0;
    bce -= m * std::log(p) + (1 - m) * std::log(1 - p);
    l1 += std::abs(Er[i] - G[i]);
  }
  return bce / n + l1w * l1 / n;
}

fs::path temp_dir(const std::string& tag) {
  const auto d = fs::temp_directory_path() / ("evlt_train_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TrainConfig tiny_config(int stage) {
  TrainConfig cfg;
  cfg.stage = stage;
  cfg.iterations = 3;
  cfg.batch = 2;
  cfg.crop = 16;
  cfg.seed = 5;
  cfg.model.channels = 4;
  cfg.model.heads = 2;
  cfg.model.eift_modules = 1;
  return cfg;
}

std::vector<Window> tiny_windows(int clips = 2) {
  SynthOptions so;
  so.clips = clips;
  so.height = 16;
  so.width = 20;
  so.seed = 3;
  return make_windows(synth_pairs(so), 5);
}

bool same_tree(const ParamTree<float>& a, const ParamTree<float>& b, const std::string& prefix = "") {
  for (const auto& name : a.names()) {
    if (!name.starts_with(prefix)) continue;
    if (!b.contains(name)) return false;
    const auto x = a.at(name).data(), y = b.at(name).data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("stage-1 loss analytic cases and scalar oracle") {
  const numgrid::Shape s{6, 4, 5};
  std::mt19937_64 rng(1);
  const auto G = rand_tensor(s, rng, 0.0, 0.4);
  const auto half = Tensor<double>(s, 0.5);
  const auto l = loss_stage1(half, G, G, 1.0);
  CHECK(l.bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l.l1 == 0.0);
  CHECK(l.total.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const auto P = rand_tensor(s, rng, 0.0, 1.0), Er = rand_tensor(s, rng, 0.0, 0.5), g = rand_tensor(s, rng, 0.0, 0.5);
    const double lam = trial * 0.25;
    CHECK(std::abs(loss_stage1(P, Er, g, lam).total.item() - oracle_stage1(P, Er, g, lam)) < 1e-6);
  }
  // Exact 0 and 1 probabilities are clamped, not errors.
  const auto edge = Tensor<double>(numgrid::Shape{2}, std::vector<double>{0.0, 1.0});
  const auto tgt = Tensor<double>(numgrid::Shape{2}, std::vector<double>{0.5, 0.0});
  CHECK(std::isfinite(loss_stage1(edge, tgt, tgt, 1.0).total.item()));
  CHECK(loss_stage1(edge, tgt, tgt, 1.0).bce == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
  CHECK_THROWS_AS(loss_stage1(half, G, rand_tensor({6, 4, 4}, rng, 0, 1), 1.0), ContractError);
  CHECK_THROWS_AS(loss_stage1(half, G, G, -1.0), ContractError);
}

TEST_CASE("stage-2 loss analytic cases") {
  const RandomConvExtractor<double> ex;
  std::mt19937_64 rng(2);
  const auto a = rand_tensor({3, 12, 12}, rng, 0.0, 1.0), b = rand_tensor({3, 12, 12}, rng, 0.0, 1.0);
  const auto same = loss_stage2(a, a, 0.1, ex);
  CHECK(same.total.item() == 0.0);
  CHECK(same.feat == 0.0);
  const auto plain = loss_stage2(a, b, 0.0, ex);
  CHECK(plain.total.item() == numgrid::l1_loss(a, b).item());
  const auto full = loss_stage2(a, b, 0.1, ex);
  CHECK(full.feat > 0.0);
  CHECK(full.total.item() == doctest::Approx(full.l1 + 0.1 * full.feat).epsilon(1e-12));
  const auto black = Tensor<double>({3, 8, 8}, 0.0), white = Tensor<double>({3, 8, 8}, 1.0);
  CHECK(loss_stage2(black, white, 0.1, ex).l1 == 1.0);
  CHECK(loss_stage2(black, white, 0.0, ex).total.item() == 1.0);
  CHECK_THROWS_AS(loss_stage2(a, black, 0.1, ex), ContractError);
}

TEST_CASE("losses are non-negative on random inputs") {
  const RandomConvExtractor<double> ex(9);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto P = rand_tensor({4, 4, 4}, rng, 0.0, 1.0), G = rand_tensor({4, 4, 4}, rng, 0.0, 1.0);
    CHECK(loss_stage1(P, P, G, 1.0).total.item() >= 0.0);
    const auto a = rand_tensor({3, 8, 8}, rng, 0.0, 1.0), b = rand_tensor({3, 8, 8}, rng, 0.0, 1.0);
    CHECK(loss_stage2(a, b, 0.1, ex).total.item() > 0.0);
  }
}

TEST_CASE("stage-2 loss gradient matches finite differences") {
  const RandomConvExtractor<double> ex;
  std::mt19937_64 rng(4);
  const auto gt = rand_tensor({3, 8, 8}, rng, 0.0, 1.0);
  numgrid::ParamTree<double> p;
  p.add("pred", rand_tensor({3, 8, 8}, rng, 0.0, 1.0));
  const auto rep = numgrid::finite_diff_check<double>(
      [&](const numgrid::ParamTree<double>& q) { return loss_stage2(q.at("pred"), gt, 0.1, ex).total; }, p);
  CHECK(rep.passed(1e-4));
}

TEST_CASE("config round trip and validation") {
  auto cfg = tiny_config(2);
  cfg.lambda2 = 0.25;
  cfg.model.guidance = net::Guidance::none;
  const auto back = TrainConfig::from_config(io::Config::parse(cfg.to_config().to_string(), "mem"));
  CHECK(back.to_config().to_string() == cfg.to_config().to_string());
  CHECK(back.lambda2 == 0.25);
  CHECK(back.model.guidance == net::Guidance::none);

  CHECK_THROWS_AS(TrainConfig::from_config(io::Config::parse("iterations=3\nlearning_rate=1\n", "mem")), ContractError);
  CHECK_THROWS_AS(TrainConfig::from_config(io::Config::parse("crop=30\n", "mem")), ContractError);
  CHECK_THROWS_AS(TrainConfig::from_config(io::Config::parse("lambda1=-1\n", "mem")), ContractError);
  CHECK_THROWS_AS(TrainConfig::from_config(io::Config::parse("stage=3\n", "mem")), ContractError);
  const auto d = TrainConfig::from_config(io::Config::parse("# defaults\n", "mem"));
  CHECK(d.batch == 4);
  CHECK(d.crop == 64);
  CHECK(d.lr == 2e-4);
  CHECK(d.lambda1 == 1.0);
  CHECK(d.lambda2 == 0.1);
}

TEST_CASE("synthetic pairs are seeded, quantized and survive the PPM round trip") {
  SynthOptions so;
  so.clips = 2;
  so.frames = 6;
  so.height = 12;
  so.width = 10;
  so.seed = 11;
  const auto a = synth_pairs(so), b = synth_pairs(so);
  REQUIRE(a.size() == 2);
  CHECK(a[0].normal == b[0].normal);
  CHECK(a[1].low == b[1].low);
  CHECK_FALSE(a[0].normal == a[1].normal);
  for (double v : a[0].low.frames[0].data) CHECK(v * 255.0 == std::round(v * 255.0));
  double ln = 0, ll = 0;
  for (const auto& f : a[0].normal.frames) ln += f.mean();
  for (const auto& f : a[0].low.frames) ll += f.mean();
  CHECK(ll < ln);

  const auto dir = temp_dir("synth");
  io::write_clip_pair(dir / a[1].name, a[1]);
  const auto back = io::read_clip_pair(dir / a[1].name);
  CHECK(back.normal == a[1].normal);
  CHECK(back.low == a[1].low);
  fs::remove_all(dir);

  const auto w = make_windows(a, 5);
  REQUIRE(w.size() == 4);
  CHECK(w[1].normal.frames[0] == a[0].normal.frames[1]);
  CHECK(w[1].low.timestamps == std::vector<double>{0, 1, 2, 3, 4});
}

TEST_CASE("stage-1 training: determinism, zero iterations, empty data") {
  auto cfg = tiny_config(1);
  const auto data = build_stage1_data(tiny_windows(), cfg);
  REQUIRE(data.size() == 2);
  CHECK(data[0].E.shape() == numgrid::Shape{30, 16, 20});

  const auto r1 = train_stage1(data, cfg), r2 = train_stage1(data, cfg);
  REQUIRE(r1.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r1.history[i].total == r2.history[i].total);
    CHECK(std::isfinite(r1.history[i].total));
    CHECK(r1.history[i].total == doctest::Approx(r1.history[i].first + r1.history[i].second).epsilon(1e-5));
  }
  CHECK(same_tree(r1.params, r2.params));

  cfg.iterations = 0;
  const auto r0 = train_stage1(data, cfg);
  ParamTree<float> init;
  net::add_restoration_params(init, cfg.model, cfg.seed);
  CHECK(r0.history.empty());
  CHECK(same_tree(r0.params, init));
  CHECK(same_tree(init, r0.params));
  CHECK_FALSE(same_tree(r1.params, init));

  CHECK_THROWS_AS(train_stage1({}, cfg), ContractError);
}

TEST_CASE("stage-2 training freezes restoration and stays finite") {
  auto c1 = tiny_config(1);
  const auto windows = tiny_windows();
  const auto s1 = train_stage1(build_stage1_data(windows, c1), c1);
  auto c2 = tiny_config(2);
  const auto data = build_stage2_data(windows, s1.params, c2);
  REQUIRE(data.size() == 2);
  CHECK(data[0].Er.shape() == numgrid::Shape{30, 16, 20});

  for (std::uint64_t seed : {1u, 2u, 3u}) {
    c2.seed = seed;
    const auto r = train_stage2(data, s1.params, c2);
    for (const auto& h : r.history) CHECK(std::isfinite(h.total));
    CHECK(same_tree(s1.params, r.params, net::kRestorePrefix));
    CHECK(r.params.is_frozen("restore.enc0.weight"));
  }
  const auto a = train_stage2(data, s1.params, c2), b = train_stage2(data, s1.params, c2);
  CHECK(same_tree(a.params, b.params));
  CHECK_THROWS_AS(train_stage2(data, ParamTree<float>{}, c2), ContractError);

  const auto out = enhance_samples(data, a.params, c2.model);
  REQUIRE(out.size() == 2);
  for (double v : out[0].data) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("training output files") {
  auto cfg = tiny_config(1);
  const auto r = train_stage1(build_stage1_data(tiny_windows(1), cfg), cfg);
  const auto dir = temp_dir("ckpt");
  const auto ckpt = dir / "s1.evck";
  save_training_output(ckpt, r, cfg);
  CHECK(same_tree(io::read_checkpoint<float>(ckpt), r.params));
  const auto snap = TrainConfig::from_config(io::Config::load(ckpt.string() + ".cfg"));
  CHECK(snap.to_config().to_string() == cfg.to_config().to_string());
  const auto csv = io::read_text(ckpt.string() + ".loss.csv");
  CHECK(csv.starts_with("iteration,L_m,L_v,total\n0,"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(mean_total(r.history, 0, 10) == doctest::Approx((r.history[0].total + r.history[1].total + r.history[2].total) / 3));
  CHECK_THROWS_AS(mean_total(r.history, 3, 1), ContractError);
  fs::remove_all(dir);
}

#include "evlt/checks/suites.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "evlt/checks/oracles.hpp"
#include "evlt/events/events.hpp"
#include "evlt/net/model.hpp"
#include "evlt/numgrid/gradcheck.hpp"
#include "evlt/numgrid/ops.hpp"
#include "evlt/scene/scene.hpp"

namespace evlt::checks {

using namespace numgrid;
using Fn = std::function<Tensor<double>(const ParamTree<double>&)>;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

// Values with magnitude in [margin, 1] and a random sign, so kinks at zero
// stay out of reach of the finite-difference step.
Tensor<double> rand_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, double margin = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) {
    do x = u(rng);
    while (std::abs(x) < margin);
  }
  return Tensor<double>(std::move(s), std::move(v));
}

struct GradCase {
  std::string name;
  ParamTree<double> params;
  Fn fn;
  double eps = 1e-5;
  bool kink_aware = false;
};

// Step for the network-level cases. Their losses sum many cancelling terms,
// so central-difference roundoff at h = 1e-5 reaches ~1e-9 absolute, which
// swamps the smallest gradients. At h = 1e-4 a few probes straddle ReLU kinks
// instead; those go through the kink-aware stencil.
constexpr double kNetworkStep = 1e-4;

// loss = sum(f(params) * R) with a fixed random R of the output's shape.
Fn weighted(std::function<Tensor<double>(const ParamTree<double>&)> f, const ParamTree<double>& probe,
            std::uint64_t seed) {
  const Shape out = f(probe).shape();
  std::mt19937_64 rng(seed);
  const auto R = rand_tensor(out, rng);
  return [f, R](const ParamTree<double>& p) { return sum(mul(f(p), R)); };
}

std::vector<GradCase> primitive_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCase> cases;
  auto add_case = [&](const std::string& name, std::vector<std::pair<std::string, Tensor<double>>> inputs,
                      std::function<Tensor<double>(const ParamTree<double>&)> f) {
    ParamTree<double> p;
    for (auto& [n, t] : inputs) p.add(n, t);
    cases.push_back({name, p, weighted(f, p, rng())});
  };
  auto r = [&](Shape s, double margin = 0.0) { return rand_tensor(std::move(s), rng, -1.0, 1.0, margin); };
  using P = const ParamTree<double>&;

  add_case("add", {{"a", r({3, 4})}, {"b", r({3, 4})}}, [](P p) { return add(p.at("a"), p.at("b")); });
  add_case("sub", {{"a", r({3, 4})}, {"b", r({3, 4})}}, [](P p) { return sub(p.at("a"), p.at("b")); });
  add_case("mul", {{"a", r({3, 4})}, {"b", r({3, 4})}}, [](P p) { return mul(p.at("a"), p.at("b")); });
  add_case("mul_self", {{"a", r({5})}}, [](P p) { return mul(p.at("a"), p.at("a")); });
  add_case("add_scalar", {{"a", r({6})}}, [](P p) { return add_scalar(p.at("a"), 0.7); });
  add_case("mul_scalar", {{"a", r({6})}}, [](P p) { return mul_scalar(p.at("a"), -1.3); });
  add_case("add_bias", {{"a", r({4, 3})}, {"b", r({3})}}, [](P p) { return add_bias(p.at("a"), p.at("b")); });
  add_case("matmul", {{"a", r({3, 5})}, {"b", r({5, 2})}}, [](P p) { return matmul(p.at("a"), p.at("b")); });
  add_case("bmm", {{"a", r({2, 3, 4})}, {"b", r({2, 4, 3})}}, [](P p) { return bmm(p.at("a"), p.at("b")); });
  add_case("conv2d_3x3_stride1", {{"x", r({2, 5, 6})}, {"w", r({3, 2, 3, 3})}, {"b", r({3})}},
           [](P p) { return conv2d(p.at("x"), p.at("w"), p.at("b"), 1, 1); });
  add_case("conv2d_3x3_stride2", {{"x", r({2, 6, 7})}, {"w", r({3, 2, 3, 3})}, {"b", r({3})}},
           [](P p) { return conv2d(p.at("x"), p.at("w"), p.at("b"), 2, 1); });
  add_case("conv2d_1x1", {{"x", r({3, 4, 4})}, {"w", r({2, 3, 1, 1})}, {"b", r({2})}},
           [](P p) { return conv2d(p.at("x"), p.at("w"), p.at("b"), 1, 0); });
  add_case("upsample_nearest", {{"x", r({2, 3, 4})}}, [](P p) { return upsample_nearest(p.at("x"), 2); });
  add_case("resize_bilinear_up", {{"x", r({2, 3, 4})}}, [](P p) { return resize_bilinear(p.at("x"), 7, 9); });
  add_case("resize_bilinear_down", {{"x", r({2, 8, 8})}}, [](P p) { return resize_bilinear(p.at("x"), 3, 5); });
  add_case("adaptive_avg_pool2d_down", {{"x", r({2, 7, 9})}},
           [](P p) { return adaptive_avg_pool2d(p.at("x"), 3, 4); });
  add_case("adaptive_avg_pool2d_up", {{"x", r({2, 3, 3})}},
           [](P p) { return adaptive_avg_pool2d(p.at("x"), 8, 8); });
  add_case("relu", {{"x", r({4, 5}, 0.05)}}, [](P p) { return relu(p.at("x")); });
  add_case("sigmoid", {{"x", mul_scalar(r({4, 5}), 4.0)}}, [](P p) { return sigmoid(p.at("x")); });
  add_case("clamp", {{"x", r({4, 5}, 0.05)}}, [](P p) { return clamp(p.at("x"), -0.5, 0.5); });
  add_case("softmax_axis0", {{"x", r({3, 4})}}, [](P p) { return softmax(p.at("x"), 0); });
  add_case("softmax_axis1", {{"x", r({3, 4})}}, [](P p) { return softmax(p.at("x"), 1); });
  add_case("layer_norm", {{"x", r({3, 6})}, {"g", r({6})}, {"b", r({6})}},
           [](P p) { return layer_norm(p.at("x"), p.at("g"), p.at("b")); });
  add_case("concat", {{"a", r({2, 3})}, {"b", r({1, 3})}},
           [](P p) { return concat(std::vector<Tensor<double>>{p.at("a"), p.at("b"), p.at("a")}, 0); });
  add_case("slice", {{"x", r({4, 3})}}, [](P p) { return slice(p.at("x"), 1, 1, 3); });
  add_case("reshape", {{"x", r({4, 3})}}, [](P p) { return reshape(p.at("x"), Shape{2, 6}); });
  add_case("transpose", {{"x", r({4, 3})}}, [](P p) { return transpose(p.at("x")); });
  add_case("permute", {{"x", r({2, 3, 4})}}, [](P p) { return permute(p.at("x"), {2, 0, 1}); });
  add_case("sum", {{"x", r({3, 3})}}, [](P p) { return sum(p.at("x")); });
  add_case("mean", {{"x", r({3, 3})}}, [](P p) { return mean(p.at("x")); });
  {
    ParamTree<double> p;
    p.add("a", r({10}, 0.05));
    cases.push_back({"l1_loss", p, [](P q) { return l1_loss(q.at("a"), Tensor<double>(Shape{10}, 0.0)); }});
  }
  {
    ParamTree<double> p;
    p.add("p", rand_tensor({12}, rng, 0.05, 0.95));
    std::vector<double> t(12);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i % 2);
    const Tensor<double> target(Shape{12}, t);
    cases.push_back({"bce_loss", p, [target](P q) { return bce_loss(q.at("p"), target); }});
  }
  return cases;
}

CheckResult run_case(const GradCase& c, double tol) {
  const auto t0 = Clock::now();
  ParamTree<double> params = c.params;
  CheckResult res{"grad/" + c.name, false, "", 0.0};
  try {
    GradCheckOptions opt;
    opt.eps = c.eps;
    opt.kink_aware = c.kink_aware;
    const auto rep = finite_diff_check<double>(c.fn, params, opt);
    res.passed = rep.passed(tol);
    res.detail = "max rel err " + fmt(rep.worst) + (rep.worst_param.empty() ? "" : " at " + rep.worst_param) +
                 ", " + std::to_string(rep.probes) + " probes";
  } catch (const std::exception& e) {
    res.detail = std::string("threw: ") + e.what();
  }
  res.seconds = since(t0);
  return res;
}

}  // namespace

std::vector<CheckResult> run_grad_suite(std::uint64_t seed, double tol) {
  std::vector<CheckResult> out;
  for (const auto& c : primitive_cases(seed)) out.push_back(run_case(c, tol));

  // Network-level checks at C=2, H=W=8, N=2.
  net::ModelConfig cfg;
  cfg.channels = 2;
  cfg.frames = 2;
  cfg.heads = 4;
  std::mt19937_64 rng(seed ^ 0x5151);
  auto params = net::make_params<double>(cfg, seed);
  // Probe at a well-conditioned point. Variance-preserving weights (std
  // 1/sqrt(fan_in)) and small positive biases keep activations O(1), ReLUs
  // live and sigmoids unsaturated. Query/key weights shrink by sqrt(H*W) and
  // lose their biases because the channel-map logits sum over all positions;
  // a saturated softmax leaves gradients under the roundoff floor. At the training
  // init many gradient entries sit orders of magnitude below the central
  // difference's roundoff floor, where no relative comparison is meaningful.
  for (const auto& name : params.names()) {
    auto& t = params.at(name);
    auto d = t.mutable_data();
    if (name.ends_with(".weight")) {
      const double fan_in = t.rank() == 4 ? double(t.dim(1) * t.dim(2) * t.dim(3)) : double(t.dim(0));
      const bool qk = name.find(".f3.") != std::string::npos || name.find(".f4.") != std::string::npos;
      std::normal_distribution<double> n(0.0, (qk ? 0.125 : 1.0) / std::sqrt(fan_in));
      for (auto& v : d) v = n(rng);
    } else if (name.ends_with(".bias")) {
      const bool qk = name.find(".f3.") != std::string::npos || name.find(".f4.") != std::string::npos;
      std::normal_distribution<double> n(0.1, 0.05);
      for (auto& v : d) v = qk ? 0.0 : n(rng);
    }
  }
  const auto low = rand_tensor({3, 8, 8}, rng, 0.0, 0.3);
  const auto er = rand_tensor({std::size_t(cfg.planes()), 8, 8}, rng, 0.0, 1.2);
  {
    ParamTree<double> p = params;
    p.freeze_prefix(net::kRestorePrefix);
    auto f = [low, er, cfg](const ParamTree<double>& q) { return net::enhance(low, er, q, cfg).raw; };
    out.push_back(run_case({"enhance_full_C2_8x8_N2", p, weighted(f, p, rng()), kNetworkStep, true}, tol));
  }
  {
    ParamTree<double> p = params;
    p.freeze_prefix(net::kRestorePrefix);
    auto f = [low, er, cfg](const ParamTree<double>& q) {
      auto c2 = cfg;
      c2.eift_modules = 0;
      return net::enhance(low, er, q, c2).raw;
    };
    out.push_back(run_case({"enhance_no_eift_modules", p, weighted(f, p, rng()), kNetworkStep, true}, tol));
  }
  {
    // Gradients w.r.t. both fusion inputs.
    ParamTree<double> p;
    p.add("F_E", rand_tensor({2, 8, 8}, rng));
    p.add("F_I", rand_tensor({2, 8, 8}, rng));
    auto f = [params](const ParamTree<double>& q) {
      const auto r = net::eift_module(q.at("F_E"), q.at("F_I"), params, "eift.0");
      return concat(std::vector<Tensor<double>>{r.events, r.image}, 0);
    };
    out.push_back(run_case({"eift_module_inputs", p, weighted(f, p, rng()), kNetworkStep, true}, tol));
  }
  {
    ParamTree<double> p;
    for (const auto& name : params.names())
      if (name.starts_with(net::kRestorePrefix)) p.add(name, params.at(name).clone());
    const auto E = rand_tensor({std::size_t(cfg.planes()), 8, 8}, rng, 0.0, 1.0);
    auto f = [E, cfg](const ParamTree<double>& q) {
      const auto r = net::restore_events(E, q, cfg);
      return concat(std::vector<Tensor<double>>{r.P, r.V}, 0);
    };
    out.push_back(run_case({"restore_events_heads", p, weighted(f, p, rng()), kNetworkStep, true}, tol));
  }
  return out;
}

std::vector<CheckResult> run_voxel_suite(std::uint64_t seed, int streams) {
  std::mt19937_64 rng(seed);
  const auto t_start = Clock::now();
  int exact_fail = 0, mass_fail = 0, linear_fail = 0;
  double worst_mass = 0, worst_lin = 0;
  double oracle_seconds = 0;
  for (int s = 0; s < streams; ++s) {
    const int bins = 2 + static_cast<int>(rng() % 4);
    const int h = 1 + static_cast<int>(rng() % 16), w = 1 + static_cast<int>(rng() % 16);
    const double t0 = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    const double tn = t0 + std::uniform_real_distribution<double>(0.5, 8.0)(rng);
    const int count = static_cast<int>(rng() % 501);
    std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1), uc(0, 2), up(0, 1);
    events::EventStream ev;
    for (int i = 0; i < count; ++i) {
      float t;
      do t = static_cast<float>(std::uniform_real_distribution<double>(t0, tn)(rng));
      while (!(t >= t0 && t <= tn));
      // Some events sit exactly on the interval ends.
      if (i % 50 == 0) t = static_cast<float>(t0);
      if (t < t0) t = std::nextafter(t, INFINITY);
      ev.push_back(events::Event{static_cast<std::uint16_t>(ux(rng)), static_cast<std::uint16_t>(uy(rng)), t,
                                 static_cast<std::uint8_t>(uc(rng)), static_cast<std::int8_t>(up(rng) ? 1 : -1)});
    }
    const auto t_or = Clock::now();
    const auto fast = events::voxelize(ev, bins, h, w, t0, tn);
    oracle_seconds += since(t_or);
    const auto slow = naive_voxelize(ev, bins, h, w, t0, tn);
    if (fast.values != slow.values) ++exact_fail;

    // Mass: each single event contributes total weight 1 to its own group.
    if (!ev.empty()) {
      const auto& e = ev[rng() % ev.size()];
      const auto one = events::voxelize(events::EventStream{e}, bins, h, w, t0, tn);
      double total = 0;
      for (double v : one.values) total += v;
      worst_mass = std::max(worst_mass, std::abs(total - 1.0));
      if (std::abs(total - 1.0) > 1e-9) ++mass_fail;
    }
    // Linearity over a random split.
    const std::size_t cut = ev.empty() ? 0 : rng() % (ev.size() + 1);
    const events::EventStream a(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(cut));
    const events::EventStream b(ev.begin() + static_cast<std::ptrdiff_t>(cut), ev.end());
    const auto ga = events::voxelize(a, bins, h, w, t0, tn), gb = events::voxelize(b, bins, h, w, t0, tn);
    double err = 0;
    for (std::size_t i = 0; i < fast.values.size(); ++i)
      err = std::max(err, std::abs(fast.values[i] - ga.values[i] - gb.values[i]));
    worst_lin = std::max(worst_lin, err);
    if (err > 1e-9) ++linear_fail;
  }
  const double total = since(t_start);
  std::vector<CheckResult> out;
  out.push_back({"voxel/oracle_bit_exact", exact_fail == 0 && total < 10.0,
                 std::to_string(streams - exact_fail) + "/" + std::to_string(streams) + " identical, voxelize " +
                     fmt(oracle_seconds) + " s, suite " + fmt(total) + " s (limit 10 s)",
                 total});
  out.push_back({"voxel/mass_conservation", mass_fail == 0, "worst |sum-1| " + fmt(worst_mass), 0.0});
  out.push_back({"voxel/linearity", linear_fail == 0, "worst abs err " + fmt(worst_lin), 0.0});
  return out;
}

std::vector<CheckResult> run_fusion_suite(std::uint64_t seed, int cases) {
  std::mt19937_64 rng(seed);
  const auto t_start = Clock::now();
  double worst_row = 0, worst_x = 0, worst_f = 0;
  bool attention_in_range = true;
  for (int i = 0; i < cases; ++i) {
    net::ModelConfig cfg;
    cfg.channels = 1 + static_cast<int>(rng() % 6);
    cfg.heads = 1;
    cfg.eift_modules = 1;
    cfg.frames = 1;
    const std::size_t c = cfg.channels, h = 2 + rng() % 7, w = 2 + rng() % 7;
    auto params = net::make_params<double>(cfg, rng());
    // Wider weights than the init so the softmax is far from uniform.
    std::normal_distribution<double> n(0.0, 0.5);
    for (const auto& name : params.names())
      for (auto& v : params.at(name).mutable_data()) v = n(rng);
    const auto main = rand_tensor({c, h, w}, rng), mod = rand_tensor({c, h, w}, rng);
    const std::string pre = "eift.0.block0";
    const auto m2 = net::modulation_features(mod, params, pre);
    const auto map = net::cct_channel_map(m2, params, pre);
    const auto X = net::cct(main, m2, params, pre);
    const auto F = net::ewp(X, m2, params, pre);
    const auto sig = sigmoid(conv2d(X, params.at(pre + ".f5.weight"), params.at(pre + ".f5.bias"), 1, 1));
    for (double v : sig.data()) attention_in_range = attention_in_range && v > 0.0 && v < 1.0;

    const std::vector<double> vm(main.data().begin(), main.data().end()), vd(mod.data().begin(), mod.data().end());
    const auto oracle = cct_ewp_oracle(vm, vd, int(c), int(h), int(w), params, pre);
    for (std::size_t r = 0; r < c; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < c; ++k) s += map[r * c + k];
      worst_row = std::max(worst_row, std::abs(s - 1.0));
    }
    for (std::size_t k = 0; k < X.numel(); ++k) {
      worst_x = std::max(worst_x, std::abs(X[k] - oracle.X[k]));
      worst_f = std::max(worst_f, std::abs(F[k] - oracle.F[k]));
    }
  }
  // C = 1: the map is [1] and X is f1(main) bit for bit.
  bool c1_exact = true;
  for (int i = 0; i < 10; ++i) {
    net::ModelConfig cfg;
    cfg.channels = 1;
    cfg.heads = 1;
    cfg.eift_modules = 1;
    cfg.frames = 1;
    auto params = net::make_params<double>(cfg, rng());
    std::normal_distribution<double> n(0.0, 1.0);
    for (const auto& name : params.names())
      for (auto& v : params.at(name).mutable_data()) v = n(rng);
    const auto main = rand_tensor({1, 5, 4}, rng), mod = rand_tensor({1, 5, 4}, rng);
    const std::string pre = "eift.0.block0";
    const auto m2 = net::modulation_features(mod, params, pre);
    const auto map = net::cct_channel_map(m2, params, pre);
    const auto X = net::cct(main, m2, params, pre);
    const auto f1 = conv2d(main, params.at(pre + ".f1.weight"), params.at(pre + ".f1.bias"), 1, 0);
    c1_exact = c1_exact && map.numel() == 1 && map[0] == 1.0 &&
               std::equal(X.data().begin(), X.data().end(), f1.data().begin());
  }
  const double secs = since(t_start);
  return {
      {"fusion/channel_map_rows_sum_to_one", worst_row <= 1e-6, "worst |row sum - 1| " + fmt(worst_row), secs},
      {"fusion/single_channel_identity", c1_exact, c1_exact ? "map == [1], X == f1(main) exactly" : "mismatch", 0},
      {"fusion/cct_matches_loop_oracle", worst_x <= 1e-6,
       std::to_string(cases) + " cases, worst abs err " + fmt(worst_x), 0},
      {"fusion/ewp_matches_loop_oracle", worst_f <= 1e-6 && attention_in_range,
       std::to_string(cases) + " cases, worst abs err " + fmt(worst_f) +
           (attention_in_range ? ", attention in (0,1)" : ", attention left (0,1)"),
       0},
  };
}

std::vector<CheckResult> run_gate_suite(std::uint64_t seed, int cases) {
  std::mt19937_64 rng(seed);
  std::size_t checked = 0, bad = 0;
  for (int i = 0; i < cases; ++i) {
    net::ModelConfig cfg;
    cfg.channels = 4;
    cfg.frames = 1 + static_cast<int>(rng() % 5);
    auto params = net::make_params<double>(cfg, rng());
    // Spread the heads so P lands on both sides of 0.5.
    std::normal_distribution<double> n(0.0, 0.4);
    for (const auto& name : params.names())
      for (auto& v : params.at(name).mutable_data()) v = n(rng);
    const std::size_t h = 4 * (1 + rng() % 3), w = 4 * (1 + rng() % 3);
    const auto E = rand_tensor({std::size_t(cfg.planes()), h, w}, rng, 0.0, 2.0);
    const auto r = net::restore_events(E, params, cfg);
    for (std::size_t k = 0; k < r.P.numel(); ++k) {
      ++checked;
      const double want = r.P[k] >= 0.5 ? r.V[k] : 0.0;
      if (!(r.Er[k] == want) || !(r.P[k] > 0.0 && r.P[k] < 1.0)) ++bad;
    }
  }
  // Exact boundary: P = 0.5 opens the gate.
  const Tensor<double> P(Shape{4}, std::vector<double>{0.5, 0.4999999999, 0.9, 0.1});
  const Tensor<double> V(Shape{4}, std::vector<double>{2.0, 3.0, 4.0, 5.0});
  const auto Er = net::gate(P, V);
  const bool boundary = Er[0] == 2.0 && Er[1] == 0.0 && Er[2] == 4.0 && Er[3] == 0.0;
  return {{"gate/exactness", bad == 0 && boundary,
           std::to_string(checked - bad) + "/" + std::to_string(checked) + " elements exact" +
               (boundary ? ", P=0.5 opens the gate" : ", boundary case wrong"),
           0.0}};
}

std::vector<CheckResult> run_threshold_suite(std::uint64_t seed, int clips) {
  std::mt19937_64 rng(seed);
  std::size_t lo_total = 0, hi_total = 0, missing = 0;
  for (int i = 0; i < clips; ++i) {
    const std::uint64_t s = rng();
    auto clip = scene::render_clip(scene::random_scene(32, 32, 5, s), s);
    // Half the clips are darkened so both regimes are covered.
    if (i % 2 == 1) clip = scene::degrade_clip(clip, scene::sample_degradation_params(s));
    const auto dense = events::interpolate_frames(clip, events::kDefaultInterpFactor);
    const auto lo = events::generate_events(dense, events::kLowLightThreshold);
    const auto hi = events::generate_events(dense, events::kNormalLightThreshold);
    std::set<std::tuple<float, int, int, int, int>> all;
    for (const auto& e : lo) all.emplace(e.t, e.y, e.x, e.c, e.p);
    for (const auto& e : hi) missing += all.count({e.t, e.y, e.x, e.c, e.p}) ? 0 : 1;
    lo_total += lo.size();
    hi_total += hi.size();
  }
  return {{"events/threshold_subset", missing == 0 && hi_total > 0,
           std::to_string(clips) + " clips, " + std::to_string(hi_total) + " theta=5 events within " +
               std::to_string(lo_total) + " theta=2 events, " + std::to_string(missing) + " missing",
           0.0}};
}

bool report(std::ostream& os, const std::vector<CheckResult>& results) {
  bool ok = true;
  for (const auto& r : results) {
    os << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
    ok = ok && r.passed;
  }
  return ok;
}

}  // namespace evlt::checks

#include "evlt/train/synth.hpp"

#include <cstdio>

#include "evlt/io/formats.hpp"
#include "evlt/scene/scene.hpp"

namespace evlt::train {

namespace {

void quantize_clip(VideoClip& clip) {
  for (auto& f : clip.frames)
    for (auto& v : f.data) v = io::quantize(v) / 255.0;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<io::ClipPair> synth_pairs(const SynthOptions& opt) {
  require(opt.clips >= 1, "synth_pairs: clips must be >= 1");
  require(opt.frames >= 2, "synth_pairs: frames must be >= 2");
  require(opt.height >= 1 && opt.width >= 1, "synth_pairs: resolution must be positive");
  std::vector<io::ClipPair> out;
  for (int k = 0; k < opt.clips; ++k) {
    // Per-clip seeds derived by a fixed odd multiplier stay distinct and
    // reproducible for any base seed.
    const std::uint64_t s = opt.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(k) * 2 + 1;
    io::ClipPair p;
    char name[32];
    std::snprintf(name, sizeof name, "clip_%03d", k);
    p.name = name;
    p.normal = scene::render_clip(scene::random_scene(opt.height, opt.width, opt.frames, s), s);
    quantize_clip(p.normal);
    const auto dp = opt.test_preset ? scene::test_degradation_params(s ^ 0xD06) : scene::sample_degradation_params(s ^ 0xD06);
    p.low = scene::degrade_clip(p.normal, dp);
    quantize_clip(p.low);
    p.meta.set("seed", std::to_string(s));
    p.meta.set("frames", std::to_string(opt.frames));
    p.meta.set("height", std::to_string(opt.height));
    p.meta.set("width", std::to_string(opt.width));
    p.meta.set("gamma", num(dp.gamma));
    p.meta.set("alpha", num(dp.alpha));
    p.meta.set("beta", num(dp.beta));
    p.meta.set("sigma", num(dp.sigma));
    p.meta.set("noise_seed", std::to_string(dp.seed));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace evlt::train

#include "evlt/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "evlt/io/formats.hpp"
#include "evlt/numgrid/adam.hpp"
#include "evlt/numgrid/ops.hpp"
#include "evlt/train/losses.hpp"

namespace evlt::train {

using namespace numgrid;

void TrainConfig::validate() const {
  require(stage == 1 || stage == 2, "TrainConfig: stage must be 1 or 2");
  require(iterations >= 0, "TrainConfig: iterations must be >= 0");
  require(batch >= 1, "TrainConfig: batch must be >= 1");
  require(crop >= 4 && crop % 4 == 0, "TrainConfig: crop must be a positive multiple of 4");
  require(lr > 0.0, "TrainConfig: lr must be positive");
  require(lambda1 >= 0.0 && lambda2 >= 0.0, "TrainConfig: lambda1 and lambda2 must be non-negative");
  require(interp_factor >= 1, "TrainConfig: interp_factor must be >= 1");
  require(threshold_low > 0.0 && threshold_normal > 0.0, "TrainConfig: thresholds must be positive");
  model.validate();
}

TrainConfig TrainConfig::from_config(const io::Config& c) {
  static const std::set<std::string> known = {
      "stage", "iterations", "batch", "crop", "lr", "beta1", "beta2", "adam_eps", "lambda1", "lambda2", "seed",
      "interp_factor", "threshold_low", "threshold_normal", "log_every", "channels", "eift_modules", "heads",
      "patch", "frames", "guidance"};
  const auto unknown = c.unknown_keys(known);
  if (!unknown.empty()) throw ContractError("config: unknown key '" + unknown.front() + "'");
  TrainConfig t;
  t.stage = static_cast<int>(c.get_int("stage", t.stage));
  t.iterations = static_cast<int>(c.get_int("iterations", t.iterations));
  t.batch = static_cast<int>(c.get_int("batch", t.batch));
  t.crop = static_cast<int>(c.get_int("crop", t.crop));
  t.lr = c.get_double("lr", t.lr);
  t.beta1 = c.get_double("beta1", t.beta1);
  t.beta2 = c.get_double("beta2", t.beta2);
  t.adam_eps = c.get_double("adam_eps", t.adam_eps);
  t.lambda1 = c.get_double("lambda1", t.lambda1);
  t.lambda2 = c.get_double("lambda2", t.lambda2);
  t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(t.seed)));
  t.interp_factor = static_cast<int>(c.get_int("interp_factor", t.interp_factor));
  t.threshold_low = c.get_double("threshold_low", t.threshold_low);
  t.threshold_normal = c.get_double("threshold_normal", t.threshold_normal);
  t.log_every = static_cast<int>(c.get_int("log_every", t.log_every));
  t.model.channels = static_cast<int>(c.get_int("channels", t.model.channels));
  t.model.eift_modules = static_cast<int>(c.get_int("eift_modules", t.model.eift_modules));
  t.model.heads = static_cast<int>(c.get_int("heads", t.model.heads));
  t.model.patch = static_cast<int>(c.get_int("patch", t.model.patch));
  t.model.frames = static_cast<int>(c.get_int("frames", t.model.frames));
  t.model.guidance = net::parse_guidance(c.get_string("guidance", net::guidance_name(t.model.guidance)));
  t.validate();
  return t;
}

io::Config TrainConfig::to_config() const {
  io::Config c;
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  c.set("stage", std::to_string(stage));
  c.set("iterations", std::to_string(iterations));
  c.set("batch", std::to_string(batch));
  c.set("crop", std::to_string(crop));
  c.set("lr", num(lr));
  c.set("beta1", num(beta1));
  c.set("beta2", num(beta2));
  c.set("adam_eps", num(adam_eps));
  c.set("lambda1", num(lambda1));
  c.set("lambda2", num(lambda2));
  c.set("seed", std::to_string(seed));
  c.set("interp_factor", std::to_string(interp_factor));
  c.set("threshold_low", num(threshold_low));
  c.set("threshold_normal", num(threshold_normal));
  c.set("log_every", std::to_string(log_every));
  c.set("channels", std::to_string(model.channels));
  c.set("eift_modules", std::to_string(model.eift_modules));
  c.set("heads", std::to_string(model.heads));
  c.set("patch", std::to_string(model.patch));
  c.set("frames", std::to_string(model.frames));
  c.set("guidance", net::guidance_name(model.guidance));
  return c;
}

std::vector<Window> make_windows(const std::vector<io::ClipPair>& pairs, int frames) {
  require(frames >= 2, "make_windows: need at least 2 frames per window");
  std::vector<Window> out;
  for (const auto& p : pairs) {
    const int n = static_cast<int>(p.normal.size());
    for (int s = 0; s + frames <= n; ++s) {
      Window w;
      w.name = p.name + (n == frames ? "" : "@" + std::to_string(s));
      for (int k = s; k < s + frames; ++k) {
        w.low.frames.push_back(p.low.frames[k]);
        w.normal.frames.push_back(p.normal.frames[k]);
        w.low.timestamps.push_back(k - s);
        w.normal.timestamps.push_back(k - s);
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<io::ClipPair> load_dataset(const std::filesystem::path& root) {
  std::vector<io::ClipPair> pairs;
  for (const auto& dir : io::list_clip_dirs(root)) pairs.push_back(io::read_clip_pair(dir));
  require(!pairs.empty(), "load_dataset: no clip pairs under " + root.string());
  return pairs;
}

std::vector<Stage1Sample> build_stage1_data(const std::vector<Window>& windows, const TrainConfig& cfg) {
  std::vector<Stage1Sample> out;
  for (const auto& w : windows) {
    require(static_cast<int>(w.low.size()) == cfg.model.frames, "build_stage1_data: window length != frames");
    out.push_back({w.name,
                   net::voxels_to_tensor<float>(events::clip_to_voxels(w.low, cfg.threshold_low, cfg.interp_factor)),
                   net::voxels_to_tensor<float>(
                       events::clip_to_voxels(w.normal, cfg.threshold_normal, cfg.interp_factor))});
  }
  return out;
}

std::vector<Stage2Sample> build_stage2_data(const std::vector<Window>& windows, const ParamTree<float>& params,
                                            const TrainConfig& cfg) {
  std::vector<Stage2Sample> out;
  const std::size_t center = static_cast<std::size_t>(cfg.model.frames / 2);
  for (const auto& w : windows) {
    require(static_cast<int>(w.low.size()) == cfg.model.frames, "build_stage2_data: window length != frames");
    const auto E = net::voxels_to_tensor<float>(events::clip_to_voxels(w.low, cfg.threshold_low, cfg.interp_factor));
    out.push_back({w.name, net::image_to_tensor<float>(w.low.frames[center]),
                   net::restore_events(E, params, cfg.model).Er.detach(),
                   net::image_to_tensor<float>(w.normal.frames[center])});
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

// Spatial crop of a constant [C, H, W] tensor.
Tensor<float> crop(const Tensor<float>& t, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  const std::size_t c = t.dim(0), H = t.dim(1), W = t.dim(2);
  if (y0 == 0 && x0 == 0 && h == H && w == W) return t;
  std::vector<float> v(c * h * w);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) v[(k * h + y) * w + x] = t[(k * H + y0 + y) * W + x0 + x];
  return Tensor<float>(Shape{c, h, w}, std::move(v));
}

struct CropBox {
  std::size_t y0, x0, h, w;
};

CropBox pick_crop(std::mt19937_64& rng, std::size_t H, std::size_t W, int crop_size) {
  const std::size_t h = std::min<std::size_t>(H, crop_size), w = std::min<std::size_t>(W, crop_size);
  require(h % 4 == 0 && w % 4 == 0, "training: frame size must be a multiple of 4 (got " + std::to_string(H) +
                                        "x" + std::to_string(W) + ")");
  const std::size_t y0 = H == h ? 0 : rng() % (H - h + 1);
  const std::size_t x0 = W == w ? 0 : rng() % (W - w + 1);
  return {y0, x0, h, w};
}

AdamState<float> make_adam(const TrainConfig& cfg) {
  AdamState<float> s;
  s.hyper = AdamHyper{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  return s;
}

void scale(GradientMap<float>& g, float s) {
  for (auto& [k, t] : g)
    for (auto& v : t.mutable_data()) v *= s;
}

}  // namespace

TrainResult train_stage1(const std::vector<Stage1Sample>& data, const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  require(!data.empty(), "train_stage1: empty dataset");
  const auto t0 = Clock::now();
  TrainResult res;
  net::add_restoration_params(res.params, cfg.model, cfg.seed);
  auto adam = make_adam(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x1111);
  for (int it = 0; it < cfg.iterations; ++it) {
    GradientMap<float> grads;
    LossRecord rec{it, 0, 0, 0};
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& s = data[rng() % data.size()];
      const auto box = pick_crop(rng, s.E.dim(1), s.E.dim(2), cfg.crop);
      const auto E = crop(s.E, box.y0, box.x0, box.h, box.w);
      const auto G = crop(s.G, box.y0, box.x0, box.h, box.w);
      const auto out = net::restore_events(E, res.params, cfg.model);
      const auto loss = loss_stage1(out.P, out.Er, G, cfg.lambda1);
      accumulate(grads, backward(loss.total, res.params));
      rec.first += loss.bce / cfg.batch;
      rec.second += loss.l1 / cfg.batch;
      rec.total += static_cast<double>(loss.total.item()) / cfg.batch;
    }
    scale(grads, 1.0f / static_cast<float>(cfg.batch));
    adam_step(res.params, grads, adam);
    res.history.push_back(rec);
    if (progress && cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iterations)) progress(rec);
  }
  res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

TrainResult train_stage2(const std::vector<Stage2Sample>& data, const ParamTree<float>& stage1,
                         const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  require(!data.empty(), "train_stage2: empty dataset");
  require(stage1.has_prefix(net::kRestorePrefix), "train_stage2: stage-1 parameters are missing");
  const auto t0 = Clock::now();
  TrainResult res;
  for (const auto& [name, t] : stage1)
    if (name.starts_with(net::kRestorePrefix)) res.params.add(name, t.clone());
  res.params.freeze_prefix(net::kRestorePrefix);
  net::add_enhancer_params(res.params, cfg.model, cfg.seed);
  auto adam = make_adam(cfg);
  const RandomConvExtractor<float> extractor;
  std::mt19937_64 rng(cfg.seed ^ 0x2222);
  for (int it = 0; it < cfg.iterations; ++it) {
    GradientMap<float> grads;
    LossRecord rec{it, 0, 0, 0};
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& s = data[rng() % data.size()];
      const auto box = pick_crop(rng, s.low.dim(1), s.low.dim(2), cfg.crop);
      const auto low = crop(s.low, box.y0, box.x0, box.h, box.w);
      const auto er = crop(s.Er, box.y0, box.x0, box.h, box.w);
      const auto gt = crop(s.gt, box.y0, box.x0, box.h, box.w);
      const auto out = net::enhance(low, er, res.params, cfg.model);
      // The pre-clamp output carries gradient everywhere; clamping only
      // matters at inference.
      const auto loss = loss_stage2(out.raw, gt, cfg.lambda2, extractor);
      accumulate(grads, backward(loss.total, res.params));
      rec.first += loss.l1 / cfg.batch;
      rec.second += loss.feat / cfg.batch;
      rec.total += static_cast<double>(loss.total.item()) / cfg.batch;
    }
    scale(grads, 1.0f / static_cast<float>(cfg.batch));
    adam_step(res.params, grads, adam);
    res.history.push_back(rec);
    if (progress && cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iterations)) progress(rec);
  }
  res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

double mean_total(const std::vector<LossRecord>& history, std::size_t begin, std::size_t count) {
  const std::size_t end = std::min(history.size(), begin + count);
  require(begin < end, "mean_total: empty range");
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += history[i].total;
  return s / static_cast<double>(end - begin);
}

void write_history_csv(const std::filesystem::path& path, int stage, const std::vector<LossRecord>& history) {
  std::ostringstream os;
  os << (stage == 1 ? "iteration,L_m,L_v,total\n" : "iteration,L1,L_feat,total\n") << std::setprecision(9);
  for (const auto& r : history) os << r.iteration << ',' << r.first << ',' << r.second << ',' << r.total << '\n';
  io::write_text(path, os.str());
}

void save_training_output(const std::filesystem::path& ckpt, const TrainResult& result, const TrainConfig& cfg) {
  io::write_checkpoint(ckpt, result.params);
  io::write_text(ckpt.string() + ".cfg", cfg.to_config().to_string());
  write_history_csv(ckpt.string() + ".loss.csv", cfg.stage, result.history);
}

std::vector<Image> enhance_samples(const std::vector<Stage2Sample>& data, const ParamTree<float>& params,
                                   const net::ModelConfig& model) {
  std::vector<Image> out;
  for (const auto& s : data) out.push_back(net::tensor_to_image(net::enhance(s.low, s.Er, params, model).image));
  return out;
}

ClipEnhancement enhance_clip(const VideoClip& low, const ParamTree<float>& params, const TrainConfig& cfg) {
  const int n = cfg.model.frames;
  const int len = static_cast<int>(low.size());
  require(len >= n, "enhance_clip: clip has fewer frames than the model window");
  ClipEnhancement out;
  std::map<int, Tensor<float>> restored;  // by window start
  for (int k = 0; k < len; ++k) {
    const int start = std::clamp(k - n / 2, 0, len - n);
    auto it = restored.find(start);
    if (it == restored.end()) {
      VideoClip w;
      for (int j = 0; j < n; ++j) {
        w.frames.push_back(low.frames[static_cast<std::size_t>(start + j)]);
        w.timestamps.push_back(static_cast<double>(j));
      }
      const auto E = net::voxels_to_tensor<float>(events::clip_to_voxels(w, cfg.threshold_low, cfg.interp_factor));
      it = restored.emplace(start, net::restore_events(E, params, cfg.model).Er.detach()).first;
    }
    const auto res = net::enhance(net::image_to_tensor<float>(low.frames[static_cast<std::size_t>(k)]), it->second,
                                  params, cfg.model);
    out.frames.frames.push_back(net::tensor_to_image(res.image));
    out.frames.timestamps.push_back(low.timestamps[static_cast<std::size_t>(k)]);
    Image m(res.mask.height, res.mask.width, 1);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = res.mask.values[i];
    out.masks.push_back(std::move(m));
  }
  return out;
}

}  // namespace evlt::train

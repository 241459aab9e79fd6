#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "evlt/io/config.hpp"
#include "evlt/io/dataset.hpp"
#include "evlt/net/model.hpp"

namespace evlt::train {

using numgrid::ParamTree;
using numgrid::Tensor;

struct TrainConfig {
  int stage = 1;
  int iterations = 2000;
  int batch = 4;
  int crop = 64;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  std::uint64_t seed = 7;
  int interp_factor = events::kDefaultInterpFactor;
  double threshold_low = events::kLowLightThreshold;
  double threshold_normal = events::kNormalLightThreshold;
  int log_every = 0;  // 0 disables progress callbacks
  net::ModelConfig model;

  void validate() const;
  /// Unknown keys are rejected so typos do not silently fall back to defaults.
  static TrainConfig from_config(const io::Config& cfg);
  io::Config to_config() const;
};

/// Voxel grids of one N-frame window: E from the low-light frames at the
/// low-light threshold, G from the normal-light frames at the normal one.
struct Stage1Sample {
  std::string name;
  Tensor<float> E;  // [B, H, W]
  Tensor<float> G;
};

/// Center low frame, its restored voxels and the normal-light target.
struct Stage2Sample {
  std::string name;
  Tensor<float> low;  // [3, H, W]
  Tensor<float> Er;   // [B, H, W]
  Tensor<float> gt;   // [3, H, W]
};

struct Window {
  std::string name;
  VideoClip low;
  VideoClip normal;
};

/// Every run of N consecutive frames of every pair.
std::vector<Window> make_windows(const std::vector<io::ClipPair>& pairs, int frames);
std::vector<io::ClipPair> load_dataset(const std::filesystem::path& root);

std::vector<Stage1Sample> build_stage1_data(const std::vector<Window>& windows, const TrainConfig& cfg);
/// Restored voxels come from the frozen restoration parameters.
std::vector<Stage2Sample> build_stage2_data(const std::vector<Window>& windows, const ParamTree<float>& params,
                                            const TrainConfig& cfg);

struct LossRecord {
  int iteration = 0;
  double first = 0.0;   // L_m (stage 1) or L1 (stage 2)
  double second = 0.0;  // L_v (stage 1) or L_feat (stage 2)
  double total = 0.0;
};

struct TrainResult {
  ParamTree<float> params;
  std::vector<LossRecord> history;
  double seconds = 0.0;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Restoration training on L_s1 with Adam. Deterministic given cfg.seed.
TrainResult train_stage1(const std::vector<Stage1Sample>& data, const TrainConfig& cfg,
                         const ProgressFn& progress = {});

/// Enhancer training on L_s2; every restoration parameter from `stage1` is
/// frozen and copied through unchanged.
TrainResult train_stage2(const std::vector<Stage2Sample>& data, const ParamTree<float>& stage1,
                         const TrainConfig& cfg, const ProgressFn& progress = {});

/// Mean of history totals over [begin, begin + count), clipped to the range.
double mean_total(const std::vector<LossRecord>& history, std::size_t begin, std::size_t count);

/// CKPT plus CKPT.cfg (config snapshot) and CKPT.loss.csv (loss history).
void save_training_output(const std::filesystem::path& ckpt, const TrainResult& result, const TrainConfig& cfg);
void write_history_csv(const std::filesystem::path& path, int stage, const std::vector<LossRecord>& history);

/// Enhanced center frame for every sample (clamped output).
std::vector<Image> enhance_samples(const std::vector<Stage2Sample>& data, const ParamTree<float>& params,
                                   const net::ModelConfig& model);

struct ClipEnhancement {
  VideoClip frames;
  std::vector<Image> masks;  // single-channel guidance masks, one per frame
};

/// Enhances every frame of a low-light clip of at least N frames. Frame k
/// sees the N-frame window centred on it, shifted inward at the clip ends.
ClipEnhancement enhance_clip(const VideoClip& low, const ParamTree<float>& params, const TrainConfig& cfg);

}  // namespace evlt::train

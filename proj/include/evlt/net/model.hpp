#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evlt/common/image.hpp"
#include "evlt/events/events.hpp"
#include "evlt/numgrid/param_tree.hpp"

namespace evlt::net {

using numgrid::ParamTree;
using numgrid::Shape;
using numgrid::Tensor;

/// How event information reaches the enhancer.
enum class Guidance {
  full,      // events feed the fusion stage and the EGDB mask
  unmasked,  // mask generation removed; EGDB sees unmasked image features
  none,      // events zeroed everywhere and EGDB unmasked
};

const char* guidance_name(Guidance g);
Guidance parse_guidance(const std::string& s);

inline constexpr int kPoolGrid = 32;
inline const std::string kRestorePrefix = "restore.";

struct ModelConfig {
  int channels = 16;      // C
  int eift_modules = 2;   // n
  int heads = 4;
  int patch = 8;          // p on the pooled 32x32 grid
  int frames = 5;         // N
  Guidance guidance = Guidance::full;

  int planes() const { return 6 * frames; }  // B
  int patches() const { return (kPoolGrid / patch) * (kPoolGrid / patch); }  // m
  void validate() const;
};

// Parameter construction: Gaussian(0, 0.02) weights, zero biases, unit
// layer-norm gains. Restoration parameters live under "restore.".
template <typename T>
void add_restoration_params(ParamTree<T>& params, const ModelConfig& cfg, std::uint64_t seed);
template <typename T>
void add_enhancer_params(ParamTree<T>& params, const ModelConfig& cfg, std::uint64_t seed);
template <typename T>
ParamTree<T> make_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
struct RestorationOutput {
  Tensor<T> P;   // [B, H, W] in (0, 1)
  Tensor<T> V;   // [B, H, W], linear head
  Tensor<T> Er;  // V where P >= 0.5, else 0
};

/// Gate of P applied to V. The 0/1 gate is a constant, so gradients reach V
/// only where the gate is open and never reach P.
template <typename T>
Tensor<T> gate(const Tensor<T>& P, const Tensor<T>& V);

/// E: [B, H, W], H and W divisible by 4.
template <typename T>
RestorationOutput<T> restore_events(const Tensor<T>& E, const ParamTree<T>& params, const ModelConfig& cfg);

/// The C x C channel map softmax_rows(K Q); exposed for inspection.
template <typename T>
Tensor<T> cct_channel_map(const Tensor<T>& mod_features, const ParamTree<T>& params, const std::string& prefix);
/// mod_features is relu(f2(mod)); both inputs [C, H, W].
template <typename T>
Tensor<T> cct(const Tensor<T>& main, const Tensor<T>& mod_features, const ParamTree<T>& params,
              const std::string& prefix);
template <typename T>
Tensor<T> ewp(const Tensor<T>& X, const Tensor<T>& mod_features, const ParamTree<T>& params,
              const std::string& prefix);
/// relu(f2(mod)), shared by both transforms of a block.
template <typename T>
Tensor<T> modulation_features(const Tensor<T>& mod, const ParamTree<T>& params, const std::string& prefix);
/// main + ewp(cct(main, mod), mod).
template <typename T>
Tensor<T> eift_block(const Tensor<T>& main, const Tensor<T>& mod, const ParamTree<T>& params,
                     const std::string& prefix);

template <typename T>
struct FeaturePair {
  Tensor<T> events;
  Tensor<T> image;
};

/// Block 0 modulates events by the image; block 1 swaps roles on block 0's outputs.
template <typename T>
FeaturePair<T> eift_module(const Tensor<T>& F_E, const Tensor<T>& F_I, const ParamTree<T>& params,
                           const std::string& prefix);

/// mask: H x W values in {0, 1} at feature resolution, or empty for the
/// unmasked variant. Returns [2C, H, W].
template <typename T>
Tensor<T> egdb(const Tensor<T>& F_E, const Tensor<T>& F_I, const std::vector<std::uint8_t>& mask,
               const ParamTree<T>& params, const ModelConfig& cfg);

template <typename T>
struct EnhanceOutput {
  Tensor<T> raw;    // decoder output before clamping
  Tensor<T> image;  // clamped to [0, 1]
  events::GuidanceMask mask;
};

/// low: [3, H, W]; Er: [B, H, W].
template <typename T>
EnhanceOutput<T> enhance(const Tensor<T>& low, const Tensor<T>& Er, const ParamTree<T>& params,
                         const ModelConfig& cfg);

// Conversions between pipeline types and tensors.
template <typename T>
Tensor<T> image_to_tensor(const Image& img);
template <typename T>
Image tensor_to_image(const Tensor<T>& t);
template <typename T>
Tensor<T> voxels_to_tensor(const events::VoxelGrid& g);
template <typename T>
events::VoxelGrid tensor_to_voxels(const Tensor<T>& t, int bins, double t0 = 0.0, double tn = 1.0);

}  // namespace evlt::net

#pragma once

#include <cstdint>
#include <vector>

#include "evlt/io/dataset.hpp"

namespace evlt::train {

struct SynthOptions {
  int clips = 8;
  int frames = 5;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
  /// Fixed evaluation degradation instead of per-clip random parameters.
  bool test_preset = false;
};

/// Paired normal/low clips named clip_000, clip_001, ... Frames are quantized
/// to 8 bits so in-memory pairs equal what write_clip_pair/read_clip_pair
/// round-trip through PPM.
std::vector<io::ClipPair> synth_pairs(const SynthOptions& opt);

}  // namespace evlt::train

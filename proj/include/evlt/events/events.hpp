#pragma once

#include <cstdint>
#include <vector>

#include "evlt/common/image.hpp"

namespace evlt::events {

inline constexpr double kLowLightThreshold = 2.0;
inline constexpr double kNormalLightThreshold = 5.0;
inline constexpr int kDefaultInterpFactor = 4;
inline constexpr double kGtMaskThreshold = 0.1;
inline constexpr double kGuidanceThreshold = 0.9;

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  float t = 0.0f;
  std::uint8_t c = 0;  // 0 r, 1 g, 2 b
  std::int8_t p = 1;   // +1 or -1
  friend bool operator==(const Event&, const Event&) = default;
};

using EventStream = std::vector<Event>;

/// Temporal bins N over [t0, tn], stored as 2*N*3 planes of H x W.
/// Plane index b = pol * (N * 3) + bin * 3 + channel, pol 0 = positive.
struct VoxelGrid {
  int bins = 0;
  int height = 0;
  int width = 0;
  double t0 = 0.0;
  double tn = 1.0;
  std::vector<double> values;

  VoxelGrid() = default;
  VoxelGrid(int n, int h, int w, double t0_, double tn_);

  int planes() const { return 6 * bins; }
  static int plane_index(int pol, int bin, int channel, int bins) { return pol * (bins * 3) + bin * 3 + channel; }
  std::size_t index(int plane, int y, int x) const {
    return (static_cast<std::size_t>(plane) * height + y) * width + x;
  }
  double& at(int plane, int y, int x) { return values[index(plane, y, x)]; }
  double at(int plane, int y, int x) const { return values[index(plane, y, x)]; }
  bool same_layout(const VoxelGrid& o) const {
    return bins == o.bins && height == o.height && width == o.width;
  }
};

/// N' = (N-1) U + 1 frames; frame j*U is input frame j, the rest are linear blends.
VideoClip interpolate_frames(const VideoClip& clip, int factor);

/// Frame differencing on the 0-255 scale. One event per pixel, channel and
/// consecutive pair with |d| >= threshold, stamped with the later frame's
/// time and sorted by (t, y, x, c).
EventStream generate_events(const VideoClip& frames, double threshold);

/// Triangular temporal kernel per (polarity, channel) group.
VoxelGrid voxelize(const EventStream& events, int bins, int height, int width, double t0, double tn);

/// interpolate -> generate -> voxelize over the clip's own time span, N = clip length.
VoxelGrid clip_to_voxels(const VideoClip& clip, double threshold, int factor = kDefaultInterpFactor);

/// 1 where value >= tau, same layout as the grid.
std::vector<std::uint8_t> gt_voxel_mask(const VoxelGrid& g, double tau = kGtMaskThreshold);

struct GuidanceMask {
  int height = 0;
  int width = 0;
  double threshold = kGuidanceThreshold;
  int source_height = 0;
  int source_width = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Max over positive bins, then over channels, nearest resize, then >= tau.
GuidanceMask egdb_mask(const VoxelGrid& er, int target_height, int target_width,
                       double tau = kGuidanceThreshold);

}  // namespace evlt::events

#include "evlt/events/events.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace evlt::events {

VoxelGrid::VoxelGrid(int n, int h, int w, double t0_, double tn_)
    : bins(n), height(h), width(w), t0(t0_), tn(tn_),
      values(static_cast<std::size_t>(6) * n * h * w, 0.0) {
  require(n >= 1 && h > 0 && w > 0, "VoxelGrid: extents must be positive");
  require(tn_ > t0_, "VoxelGrid: need tn > t0");
}

VideoClip interpolate_frames(const VideoClip& clip, int factor) {
  require(factor >= 1, "interpolate_frames: factor must be >= 1");
  require(clip.size() >= 2, "interpolate_frames: need at least 2 frames");
  require(clip.timestamps.size() == clip.size(), "interpolate_frames: one timestamp per frame");
  VideoClip out;
  for (std::size_t j = 0; j + 1 < clip.size(); ++j) {
    const Image& a = clip.frames[j];
    const Image& b = clip.frames[j + 1];
    require(a.same_shape(b), "interpolate_frames: frame shapes differ");
    const double ta = clip.timestamps[j], tb = clip.timestamps[j + 1];
    out.frames.push_back(a);
    out.timestamps.push_back(ta);
    for (int i = 1; i < factor; ++i) {
      const double s = static_cast<double>(i) / factor;
      Image m = a;
      for (std::size_t k = 0; k < m.data.size(); ++k) m.data[k] = (1.0 - s) * a.data[k] + s * b.data[k];
      out.frames.push_back(std::move(m));
      out.timestamps.push_back(ta + (tb - ta) * s);
    }
  }
  out.frames.push_back(clip.frames.back());
  out.timestamps.push_back(clip.timestamps.back());
  return out;
}

EventStream generate_events(const VideoClip& frames, double threshold) {
  require(threshold > 0.0, "generate_events: threshold must be positive");
  require(frames.size() >= 2, "generate_events: need at least 2 frames");
  require(frames.timestamps.size() == frames.size(), "generate_events: one timestamp per frame");
  const int h = frames.height(), w = frames.width();
  require(h <= 65535 && w <= 65535, "generate_events: resolution exceeds 16-bit coordinates");
  EventStream out;
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const Image& prev = frames.frames[f - 1];
    const Image& next = frames.frames[f];
    require(prev.same_shape(next) && next.channels == 3, "generate_events: frames must share an HxWx3 shape");
    const float t = static_cast<float>(frames.timestamps[f]);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          double d = 255.0 * (next.at(y, x, c) - prev.at(y, x, c));
          // Quantized frames give integer differences up to rounding; snap
          // them so thresholds like 2 behave as on 8-bit data.
          const double r = std::round(d);
          if (std::abs(d - r) < 1e-9) d = r;
          if (std::abs(d) >= threshold)
            out.push_back(Event{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t,
                                static_cast<std::uint8_t>(c), static_cast<std::int8_t>(d > 0 ? 1 : -1)});
        }
  }
  return out;
}

VoxelGrid voxelize(const EventStream& events, int bins, int height, int width, double t0, double tn) {
  VoxelGrid g(bins, height, width, t0, tn);
  const double span = tn - t0;
  for (const Event& e : events) {
    require(e.x < width && e.y < height, "voxelize: event outside the sensor");
    require(e.c < 3 && (e.p == 1 || e.p == -1), "voxelize: bad channel or polarity");
    const double t = e.t;
    if (!(t >= t0 && t <= tn))
      throw ContractError("voxelize: event time " + std::to_string(t) + " outside [t0, tn]");
    const int pol = e.p > 0 ? 0 : 1;
    if (bins == 1) {
      g.at(VoxelGrid::plane_index(pol, 0, e.c, bins), e.y, e.x) += 1.0;
      continue;
    }
    const double pos = (t - t0) / span * (bins - 1);
    const int k0 = std::min(static_cast<int>(std::floor(pos)), bins - 1);
    for (int k = k0; k <= std::min(k0 + 1, bins - 1); ++k) {
      const double wgt = std::max(0.0, 1.0 - std::abs(k - pos));
      g.at(VoxelGrid::plane_index(pol, k, e.c, bins), e.y, e.x) += wgt;
    }
  }
  return g;
}

VoxelGrid clip_to_voxels(const VideoClip& clip, double threshold, int factor) {
  const VideoClip dense = interpolate_frames(clip, factor);
  const EventStream ev = generate_events(dense, threshold);
  return voxelize(ev, static_cast<int>(clip.size()), clip.height(), clip.width(), clip.timestamps.front(),
                  clip.timestamps.back());
}

std::vector<std::uint8_t> gt_voxel_mask(const VoxelGrid& g, double tau) {
  std::vector<std::uint8_t> m(g.values.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = g.values[i] >= tau ? 1 : 0;
  return m;
}

GuidanceMask egdb_mask(const VoxelGrid& er, int target_height, int target_width, double tau) {
  require(target_height >= 1 && target_width >= 1, "egdb_mask: target must be at least 1x1");
  require(er.bins >= 1 && er.values.size() == static_cast<std::size_t>(er.planes()) * er.height * er.width,
          "egdb_mask: malformed voxel grid");
  const int h = er.height, w = er.width;
  std::vector<double> mprime(static_cast<std::size_t>(h) * w, -std::numeric_limits<double>::infinity());
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < er.bins; ++k) {
      const int plane = VoxelGrid::plane_index(0, k, c, er.bins);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double& m = mprime[static_cast<std::size_t>(y) * w + x];
          m = std::max(m, er.at(plane, y, x));
        }
    }
  GuidanceMask out;
  out.height = target_height;
  out.width = target_width;
  out.threshold = tau;
  out.source_height = h;
  out.source_width = w;
  out.values.resize(static_cast<std::size_t>(target_height) * target_width);
  for (int y = 0; y < target_height; ++y) {
    const int sy = std::min(h - 1, static_cast<int>(std::floor((y + 0.5) * h / target_height)));
    for (int x = 0; x < target_width; ++x) {
      const int sx = std::min(w - 1, static_cast<int>(std::floor((x + 0.5) * w / target_width)));
      out.values[static_cast<std::size_t>(y) * target_width + x] =
          mprime[static_cast<std::size_t>(sy) * w + sx] >= tau ? 1 : 0;
    }
  }
  return out;
}

}  // namespace evlt::events

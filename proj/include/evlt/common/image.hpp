#pragma once

#include <cstddef>
#include <vector>

#include "evlt/common/error.hpp"

namespace evlt {

/// Interleaved H x W x C intensity image (row-major, channel fastest).
/// Values are nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c = 3, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {
    require(h > 0 && w > 0 && c > 0, "Image: extents must be positive");
  }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  double mean() const {
    double s = 0.0;
    for (double v : data) s += v;
    return data.empty() ? 0.0 : s / static_cast<double>(data.size());
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Ordered frames with one timestamp per frame.
struct VideoClip {
  std::vector<Image> frames;
  std::vector<double> timestamps;

  std::size_t size() const { return frames.size(); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  friend bool operator==(const VideoClip&, const VideoClip&) = default;
};

}  // namespace evlt

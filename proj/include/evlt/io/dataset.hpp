#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evlt/common/image.hpp"
#include "evlt/io/config.hpp"

namespace evlt::io {

/// frame_000.ppm, frame_001.ppm, ... in `dir` (created if needed).
void write_frames(const std::filesystem::path& dir, const VideoClip& clip);
/// Every *.ppm in `dir` in name order; timestamps are frame indices.
VideoClip read_frames(const std::filesystem::path& dir);

/// A generated pair: DIR/normal/*.ppm, DIR/low/*.ppm and DIR/meta.txt.
struct ClipPair {
  std::string name;
  VideoClip normal;
  VideoClip low;
  Config meta;
};

void write_clip_pair(const std::filesystem::path& dir, const ClipPair& pair);
ClipPair read_clip_pair(const std::filesystem::path& dir);
/// All clip pair subdirectories of `root` in name order.
std::vector<std::filesystem::path> list_clip_dirs(const std::filesystem::path& root);

}  // namespace evlt::io

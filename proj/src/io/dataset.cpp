#include "evlt/io/dataset.hpp"

#include <algorithm>
#include <cstdio>

#include "evlt/io/formats.hpp"

namespace evlt::io {

void write_frames(const fs::path& dir, const VideoClip& clip) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < clip.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.ppm", i);
    write_ppm(dir / name, clip.frames[i]);
  }
}

VideoClip read_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(FormatErrorCode::open_failed, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  VideoClip clip;
  for (std::size_t i = 0; i < files.size(); ++i) {
    clip.frames.push_back(read_ppm(files[i]));
    require(clip.frames.back().same_shape(clip.frames.front()), "read_frames: " + files[i].string() + " size differs");
    clip.timestamps.push_back(static_cast<double>(i));
  }
  return clip;
}

void write_clip_pair(const fs::path& dir, const ClipPair& pair) {
  write_frames(dir / "normal", pair.normal);
  write_frames(dir / "low", pair.low);
  write_text(dir / "meta.txt", pair.meta.to_string());
}

ClipPair read_clip_pair(const fs::path& dir) {
  ClipPair p;
  p.name = dir.filename().string();
  p.normal = read_frames(dir / "normal");
  p.low = read_frames(dir / "low");
  if (fs::exists(dir / "meta.txt")) p.meta = Config::load(dir / "meta.txt");
  require(p.normal.size() == p.low.size() && p.normal.size() >= 2,
          "read_clip_pair: " + dir.string() + " needs matching normal/low sequences of at least 2 frames");
  require(p.normal.frames[0].same_shape(p.low.frames[0]), "read_clip_pair: normal/low resolution differs");
  return p;
}

std::vector<fs::path> list_clip_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw FormatError(FormatErrorCode::open_failed, root.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::is_directory(e.path() / "normal") && fs::is_directory(e.path() / "low"))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace evlt::io

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "evlt/common/image.hpp"

namespace evlt::metrics {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for intensities in [0, 1], capped at 100 dB.
double psnr(const Image& a, const Image& b);

/// Mean local SSIM over the valid region of the channel-mean grayscale
/// images: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1.
double ssim(const Image& a, const Image& b);

struct FrameScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<FrameScore> frames;

  void add(std::string name, const Image& pred, const Image& gt);
  double mean_psnr() const;
  double mean_ssim() const;
  /// "frame,psnr,ssim" rows followed by a "mean" row.
  void write_csv(std::ostream& os) const;
};

}  // namespace evlt::metrics

#include "evlt/metrics/metrics.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace evlt::metrics {
namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin> gaussian_taps() {
  std::array<double, kWin> g{};
  double s = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    s += g[i];
  }
  for (auto& v : g) v /= s;
  return g;
}

std::vector<double> gray(const Image& im) {
  std::vector<double> g(static_cast<std::size_t>(im.height) * im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      double s = 0;
      for (int c = 0; c < im.channels; ++c) s += im.at(y, x, c);
      g[static_cast<std::size_t>(y) * im.width + x] = s / im.channels;
    }
  return g;
}

// Valid-region separable Gaussian filter.
std::vector<double> filter(const std::vector<double>& src, int h, int w, const std::array<double, kWin>& g) {
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWin; ++i) s += g[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWin; ++i) s += g[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

void check_pair(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b))
    throw ContractError(std::string(who) + ": shape mismatch " + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                        std::to_string(b.height) + "x" + std::to_string(b.width) + "x" + std::to_string(b.channels));
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_pair(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b, "ssim");
  require(a.height >= kWin && a.width >= kWin, "ssim: image smaller than the 11x11 window");
  const int h = a.height, w = a.width;
  const auto g = gaussian_taps();
  const auto x = gray(a), y = gray(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter(x, h, w, g), my = filter(y, h, w, g);
  const auto sxx = filter(xx, h, w, g), syy = filter(yy, h, w, g), sxy = filter(xy, h, w, g);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + kC1) * (2 * cov + kC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
  }
  return total / static_cast<double>(mx.size());
}

void MetricReport::add(std::string name, const Image& pred, const Image& gt) {
  frames.push_back(FrameScore{std::move(name), psnr(pred, gt), ssim(pred, gt)});
}

double MetricReport::mean_psnr() const {
  double s = 0;
  for (const auto& f : frames) s += f.psnr;
  return frames.empty() ? 0.0 : s / static_cast<double>(frames.size());
}

double MetricReport::mean_ssim() const {
  double s = 0;
  for (const auto& f : frames) s += f.ssim;
  return frames.empty() ? 0.0 : s / static_cast<double>(frames.size());
}

void MetricReport::write_csv(std::ostream& os) const {
  os << "frame,psnr,ssim\n" << std::setprecision(10);
  for (const auto& f : frames) os << f.name << ',' << f.psnr << ',' << f.ssim << '\n';
  os << "mean," << mean_psnr() << ',' << mean_ssim() << '\n';
}

}  // namespace evlt::metrics

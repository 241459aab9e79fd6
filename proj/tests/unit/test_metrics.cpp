#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "evlt/metrics/metrics.hpp"

using namespace evlt;
using namespace evlt::metrics;

namespace {

Image random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image im(h, w, 3);
  for (auto& v : im.data) v = u(rng);
  return im;
}

// Direct per-window evaluation with an unnormalised 2-D kernel.
double ssim_direct(const Image& a, const Image& b) {
  double kern[11][11], ks = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      kern[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
      ks += kern[i][j];
    }
  auto g = [](const Image& im, int y, int x) { return (im.at(y, x, 0) + im.at(y, x, 1) + im.at(y, x, 2)) / 3.0; };
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int count = 0;
  for (int y = 0; y + 11 <= a.height; ++y)
    for (int x = 0; x + 11 <= a.width; ++x) {
      double mx = 0, my = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          mx += kern[i][j] / ks * g(a, y + i, x + j);
          my += kern[i][j] / ks * g(b, y + i, x + j);
        }
      double vx = 0, vy = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double dx = g(a, y + i, x + j) - mx, dy = g(b, y + i, x + j) - my;
          vx += kern[i][j] / ks * dx * dx;
          vy += kern[i][j] / ks * dy * dy;
          cov += kern[i][j] / ks * dx * dy;
        }
      total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("psnr: analytic cases") {
  Image a(4, 4, 3, 0.5);
  CHECK(psnr(a, a) == 100.0);
  Image b = a;
  for (auto& v : b.data) v += 0.1;  // MSE 0.01
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);
  CHECK(psnr(Image(4, 4, 3, 0.0), Image(4, 4, 3, 1.0)) == 0.0);
  CHECK_THROWS_AS(psnr(Image(4, 4, 3), Image(4, 5, 3)), ContractError);
}

TEST_CASE("ssim: analytic cases and errors") {
  std::mt19937_64 rng(1);
  const Image a = random_image(rng, 16, 20);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(Image(12, 12, 3, 0.5), Image(12, 12, 3, 0.5)) == 1.0);
  CHECK_THROWS_AS(ssim(Image(10, 20, 3), Image(10, 20, 3)), ContractError);
  CHECK_THROWS_AS(ssim(a, Image(16, 21, 3)), ContractError);
}

TEST_CASE("ssim: agrees with a direct windowed evaluation") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const Image a = random_image(rng, 14 + t, 17);
    Image b = a;
    std::normal_distribution<double> n(0.0, 0.05 * (t + 1));
    for (auto& v : b.data) v = std::clamp(v + n(rng), 0.0, 1.0);
    const double s = ssim(a, b);
    CHECK(std::abs(s - ssim_direct(a, b)) < 1e-6);
    CHECK((s >= -1.0 && s <= 1.0));
  }
}

TEST_CASE("metrics are symmetric") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const Image a = random_image(rng, 16, 16), b = random_image(rng, 16, 16);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-15);
  }
}

TEST_CASE("psnr decreases as noise grows") {
  std::mt19937_64 rng(4);
  const Image clean(32, 32, 3, 0.5);
  double last = 1e9;
  for (int level = 1; level <= 6; ++level) {
    double mean = 0;
    for (int trial = 0; trial < 20; ++trial) {
      Image noisy = clean;
      std::normal_distribution<double> n(0.0, 0.02 * level);
      for (auto& v : noisy.data) v += n(rng);
      mean += psnr(clean, noisy) / 20;
    }
    CHECK(mean < last);
    last = mean;
  }
}

TEST_CASE("report CSV") {
  MetricReport r;
  Image a(12, 12, 3, 0.5), b(12, 12, 3, 0.6);
  r.add("f0", a, a);
  r.add("f1", a, b);
  std::ostringstream os;
  r.write_csv(os);
  CHECK(os.str().rfind("frame,psnr,ssim\nf0,100,1\nf1,20,", 0) == 0);
  CHECK(r.mean_psnr() == doctest::Approx(60.0));
}

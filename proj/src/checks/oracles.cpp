#include "evlt/checks/oracles.hpp"

#include <cmath>

namespace evlt::checks {

events::VoxelGrid naive_voxelize(const events::EventStream& ev, int bins, int height, int width, double t0,
                                 double tn) {
  events::VoxelGrid g(bins, height, width, t0, tn);
  for (const auto& e : ev) {
    const int pol = e.p > 0 ? 0 : 1;
    const double pos = bins == 1 ? 0.0 : (static_cast<double>(e.t) - t0) / (tn - t0) * (bins - 1);
    for (int k = 0; k < bins; ++k) {
      const double wgt = bins == 1 ? 1.0 : std::max(0.0, 1.0 - std::abs(k - pos));
      const int plane = pol * bins * 3 + k * 3 + e.c;
      g.values[(static_cast<std::size_t>(plane) * height + e.y) * width + e.x] += wgt;
    }
  }
  return g;
}

std::vector<double> naive_conv(const std::vector<double>& x, int c, int h, int w, const std::vector<double>& weight,
                               const std::vector<double>& bias, int out, int k, int stride, int pad) {
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  std::vector<double> y(static_cast<std::size_t>(out) * oh * ow);
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (int ci = 0; ci < c; ++ci)
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
              const int yy = i * stride + a - pad, xx = j * stride + b - pad;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              s += weight[((static_cast<std::size_t>(o) * c + ci) * k + a) * k + b] *
                   x[(static_cast<std::size_t>(ci) * h + yy) * w + xx];
            }
        y[(static_cast<std::size_t>(o) * oh + i) * ow + j] = s;
      }
  return y;
}

CctOracle cct_ewp_oracle(const std::vector<double>& main, const std::vector<double>& mod, int c, int h, int w,
                         const numgrid::ParamTree<double>& params, const std::string& prefix) {
  auto vec = [&](const std::string& n) {
    const auto d = params.at(prefix + n).data();
    return std::vector<double>(d.begin(), d.end());
  };
  auto f = [&](const std::string& n, const std::vector<double>& in) {
    const int k = static_cast<int>(params.at(prefix + n + ".weight").dim(2));
    return naive_conv(in, c, h, w, vec(n + ".weight"), vec(n + ".bias"), c, k, 1, k / 2);
  };
  const int hw = h * w;
  std::vector<double> m2 = f(".f2", mod);
  for (auto& v : m2) v = std::max(0.0, v);
  const auto q = f(".f3", m2);  // Q[i][ch] = q[ch * hw + i]
  const auto kk = f(".f4", m2);  // K[ch][i]
  const auto a = f(".f1", main);

  CctOracle out;
  out.channel_map.assign(static_cast<std::size_t>(c) * c, 0.0);
  for (int r = 0; r < c; ++r) {
    std::vector<double> logits(c, 0.0);
    for (int s = 0; s < c; ++s)
      for (int i = 0; i < hw; ++i) logits[s] += kk[r * hw + i] * q[s * hw + i];
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0;
    for (double v : logits) z += std::exp(v - mx);
    for (int s = 0; s < c; ++s) out.channel_map[r * c + s] = std::exp(logits[s] - mx) / z;
  }
  // X as [HW, C] = A^T [HW, C] times the map.
  out.X.assign(static_cast<std::size_t>(c) * hw, 0.0);
  for (int i = 0; i < hw; ++i)
    for (int col = 0; col < c; ++col) {
      double s = 0;
      for (int j = 0; j < c; ++j) s += a[j * hw + i] * out.channel_map[j * c + col];
      out.X[col * hw + i] = s;
    }
  const auto g = f(".f5", out.X);
  const auto v6 = f(".f6", m2);
  out.F.resize(out.X.size());
  for (std::size_t i = 0; i < out.F.size(); ++i) out.F[i] = 1.0 / (1.0 + std::exp(-g[i])) * v6[i];
  return out;
}

}  // namespace evlt::checks

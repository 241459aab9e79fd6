#include "evlt/train/losses.hpp"

#include <cmath>
#include <random>

#include "evlt/numgrid/ops.hpp"

namespace evlt::train {

using namespace numgrid;

template <typename T>
Stage1Loss<T> loss_stage1(const Tensor<T>& P, const Tensor<T>& Er, const Tensor<T>& G, double lambda1) {
  require(P.shape() == G.shape() && Er.shape() == G.shape(),
          "loss_stage1: P, Er and G must share a shape, got " + shape_str(P.shape()) + ", " +
              shape_str(Er.shape()) + ", " + shape_str(G.shape()));
  require(lambda1 >= 0.0, "loss_stage1: lambda1 must be non-negative");
  std::vector<T> mask(G.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = G[i] >= T(events::kGtMaskThreshold) ? T(1) : T(0);
  const auto lm = bce_loss(P, Tensor<T>(G.shape(), std::move(mask)));
  const auto lv = l1_loss(Er, G);
  Stage1Loss<T> out;
  out.total = add(lm, mul_scalar(lv, static_cast<T>(lambda1)));
  out.bce = static_cast<double>(lm.item());
  out.l1 = static_cast<double>(lv.item());
  return out;
}

template <typename T>
RandomConvExtractor<T>::RandomConvExtractor(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int dims[][3] = {{3, 8, 1}, {8, 16, 2}, {16, 32, 2}};
  for (const auto& d : dims) {
    const int in = d[0], out = d[1];
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / (in * 9)));
    std::vector<T> w(static_cast<std::size_t>(out) * in * 9);
    for (auto& v : w) v = static_cast<T>(n(rng));
    stages_.push_back({Tensor<T>(Shape{std::size_t(out), std::size_t(in), 3, 3}, std::move(w)),
                       Tensor<T>(Shape{std::size_t(out)}, T(0)), d[2]});
  }
}

template <typename T>
std::vector<Tensor<T>> RandomConvExtractor<T>::features(const Tensor<T>& image) const {
  std::vector<Tensor<T>> out;
  Tensor<T> x = image;
  for (const auto& s : stages_) {
    x = relu(conv2d(x, s.weight, s.bias, s.stride, 1));
    out.push_back(x);
  }
  return out;
}

template <typename T>
Stage2Loss<T> loss_stage2(const Tensor<T>& pred, const Tensor<T>& gt, double lambda2,
                          const FeatureExtractor<T>& extractor) {
  require(pred.shape() == gt.shape(),
          "loss_stage2: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  require(lambda2 >= 0.0, "loss_stage2: lambda2 must be non-negative");
  const auto l1 = l1_loss(pred, gt);
  Stage2Loss<T> out;
  out.l1 = static_cast<double>(l1.item());
  if (lambda2 == 0.0) {
    out.total = l1;
    return out;
  }
  const auto fp = extractor.features(pred);
  const auto fg = extractor.features(gt);
  require(!fp.empty() && fp.size() == fg.size(), "loss_stage2: extractor returned mismatched feature lists");
  Tensor<T> feat = l1_loss(fp[0], fg[0]);
  for (std::size_t i = 1; i < fp.size(); ++i) feat = add(feat, l1_loss(fp[i], fg[i]));
  feat = mul_scalar(feat, static_cast<T>(1.0 / static_cast<double>(fp.size())));
  out.feat = static_cast<double>(feat.item());
  out.total = add(l1, mul_scalar(feat, static_cast<T>(lambda2)));
  return out;
}

template Stage1Loss<float> loss_stage1(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, double);
template Stage1Loss<double> loss_stage1(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, double);
template class RandomConvExtractor<float>;
template class RandomConvExtractor<double>;
template Stage2Loss<float> loss_stage2(const Tensor<float>&, const Tensor<float>&, double,
                                       const FeatureExtractor<float>&);
template Stage2Loss<double> loss_stage2(const Tensor<double>&, const Tensor<double>&, double,
                                        const FeatureExtractor<double>&);

}  // namespace evlt::train

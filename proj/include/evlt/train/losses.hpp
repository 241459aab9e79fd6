#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "evlt/net/model.hpp"

namespace evlt::train {

using numgrid::Tensor;

template <typename T>
struct Stage1Loss {
  Tensor<T> total;  // L_m + lambda1 * L_v
  double bce = 0.0;  // L_m
  double l1 = 0.0;   // L_v
};

/// L_m = mean BCE(P, [G >= 0.1]); L_v = mean |Er - G|.
template <typename T>
Stage1Loss<T> loss_stage1(const Tensor<T>& P, const Tensor<T>& Er, const Tensor<T>& G, double lambda1);

/// Maps an image [3, H, W] to a list of feature maps.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Tensor<T>> features(const Tensor<T>& image) const = 0;
};

/// Three fixed conv+ReLU stages (3->8, 8->16 stride 2, 16->32 stride 2)
/// with seeded He-normal weights. Stands in for a pretrained network.
template <typename T>
class RandomConvExtractor final : public FeatureExtractor<T> {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 0x5EEDF00Dull);
  std::vector<Tensor<T>> features(const Tensor<T>& image) const override;

 private:
  struct Stage {
    Tensor<T> weight, bias;
    int stride;
  };
  std::vector<Stage> stages_;
};

template <typename T>
struct Stage2Loss {
  Tensor<T> total;    // L1 + lambda2 * L_feat
  double l1 = 0.0;
  double feat = 0.0;  // mean over stages of mean |phi(pred) - phi(gt)|
};

template <typename T>
Stage2Loss<T> loss_stage2(const Tensor<T>& pred, const Tensor<T>& gt, double lambda2,
                          const FeatureExtractor<T>& extractor);

}  // namespace evlt::train

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evlt/numgrid/param_tree.hpp"

namespace evlt::numgrid {

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::int64_t step = 0;
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
};

/// One bias-corrected Adam update of every non-frozen parameter. Moments are
/// created lazily on first use. Throws ContractError when a gradient is
/// missing or its shape differs from the parameter's.
template <typename T>
void adam_step(ParamTree<T>& params, const GradientMap<T>& grads, AdamState<T>& state);

}  // namespace evlt::numgrid

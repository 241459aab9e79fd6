#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "evlt/numgrid/param_tree.hpp"

namespace evlt::numgrid {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Elements probed per parameter; larger tensors are sampled (at least 32
  /// elements). 0 probes every element.
  std::size_t max_elements = 0;
  std::uint64_t seed = 1;
  double denominator_floor = 1e-12;
  /// Five-point stencil with kink detection: when a ReLU kink falls inside
  /// the stencil the step shrinks, and as a last resort a one-sided
  /// difference from the smooth side is used. Meant for networks where some
  /// of thousands of probes land within a step of a kink.
  bool kink_aware = false;
};

struct GradCheckReport {
  std::map<std::string, double> max_rel_error;
  double worst = 0.0;
  std::string worst_param;
  std::size_t probes = 0;

  bool passed(double tol) const { return worst <= tol; }
};

/// Raised when the checked function throws; carries the parameter being
/// perturbed. The original exception is nested.
class GradCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compares reverse-mode gradients of `fn` against central differences,
/// |a - n| / max(|a|, |n|, floor), per non-frozen parameter.
template <typename T>
GradCheckReport finite_diff_check(const std::function<Tensor<T>(const ParamTree<T>&)>& fn,
                                  ParamTree<T>& params, const GradCheckOptions& options = {});

}  // namespace evlt::numgrid

#pragma once

// Deliberately naive reference implementations, written from the defining
// formulas with plain loops and no shared code with the optimized paths.

#include <string>
#include <vector>

#include "evlt/events/events.hpp"
#include "evlt/numgrid/param_tree.hpp"

namespace evlt::checks {

/// Every event visits every temporal bin of its group.
events::VoxelGrid naive_voxelize(const events::EventStream& ev, int bins, int height, int width, double t0,
                                 double tn);

/// Direct convolution of x [C, H, W] (row-major) with w [O, C, k, k] and bias [O], zero padding.
std::vector<double> naive_conv(const std::vector<double>& x, int c, int h, int w, const std::vector<double>& weight,
                               const std::vector<double>& bias, int out, int k, int stride, int pad);

struct CctOracle {
  std::vector<double> channel_map;  // C x C
  std::vector<double> X;            // C x H x W
  std::vector<double> F;            // ewp output, C x H x W
};

/// Fusion transforms of one block evaluated elementwise from the parameter
/// tensors under `prefix` (f1..f6).
CctOracle cct_ewp_oracle(const std::vector<double>& main, const std::vector<double>& mod, int c, int h, int w,
                         const numgrid::ParamTree<double>& params, const std::string& prefix);

}  // namespace evlt::checks

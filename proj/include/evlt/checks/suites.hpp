#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace evlt::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Finite-difference checks (double precision, 1e-4
/// relative) for every differentiable primitive and the full enhance pass
/// at C=2, H=W=8, N=2.
std::vector<CheckResult> run_grad_suite(std::uint64_t seed = 1, double tol = 1e-4);

/// Random streams (<= 500 events, N in 2..5): bit-exact agreement with the
/// brute-force accumulator, mass conservation and linearity at 1e-9.
std::vector<CheckResult> run_voxel_suite(std::uint64_t seed = 1, int streams = 1000);

/// Channel-map normalization, the C=1 identity, and loop-oracle agreement
/// of the fusion transforms over `cases` random cases.
std::vector<CheckResult> run_fusion_suite(std::uint64_t seed = 1, int cases = 100);

/// Restoration gate exactness on random outputs.
std::vector<CheckResult> run_gate_suite(std::uint64_t seed = 1, int cases = 20);

/// theta=5 events are a subset of theta=2 events on random clips.
std::vector<CheckResult> run_threshold_suite(std::uint64_t seed = 1, int clips = 100);

/// One "PASS|FAIL name (detail)" line per result; returns true if all passed.
bool report(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace evlt::checks

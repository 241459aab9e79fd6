#include <sstream>

#include "doctest.h"
#include "evlt/checks/suites.hpp"

using namespace evlt::checks;

namespace {

void all_pass(const std::vector<CheckResult>& rs) {
  REQUIRE(!rs.empty());
  for (const auto& r : rs) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.passed);
  }
}

}  // namespace

// Reduced case counts; the acceptance gate runs the full sizes.
TEST_CASE("check suites pass on small samples") {
  all_pass(run_voxel_suite(5, 60));
  all_pass(run_fusion_suite(5, 8));
  all_pass(run_gate_suite(5, 4));
  all_pass(run_threshold_suite(5, 6));
}

TEST_CASE("report prints one line per result and the overall verdict") {
  std::ostringstream os;
  const bool ok = report(os, {{"a/x", true, "fine", 0.1}, {"a/y", false, "off by 2", 0.2}});
  CHECK_FALSE(ok);
  const std::string s = os.str();
  CHECK(s.find("PASS a/x (fine)") != std::string::npos);
  CHECK(s.find("FAIL a/y (off by 2)") != std::string::npos);
}

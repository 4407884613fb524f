#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hiertrade {

struct PropertyResult {
  std::string name;
  bool passed = false;
  int instances = 0;           // instances drawn
  int checked = 0;             // instances the property applied to
  double worst = 0.0;          // largest violation or relative error observed
  std::string counterexample;  // empty when the property held everywhere
  double seconds = 0.0;
};

// Randomized invariant suites over the settlement, allocation, hierarchy,
// and training-gradient machinery.  Instance streams derive from the seed,
// so a failure reproduces exactly.  `scale` multiplies the instance counts
// (1 = the release-gate sizes).
std::vector<PropertyResult> run_property_suites(std::uint64_t seed, double scale = 1.0);

std::string format_property_result(const PropertyResult& result);

}  // namespace hiertrade

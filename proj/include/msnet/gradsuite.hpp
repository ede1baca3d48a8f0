#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msnet/gradcheck.hpp"

namespace msnet {

struct NamedGradReport {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

/// Finite-difference checks of every differentiable component: the size
/// branch end to end, one enhancement bottleneck, InfoNCE, both distribution
/// distances, the combined loss through a projection head, and the full
/// desk-scale encoder (on a seeded sample of coordinates per tensor).
std::vector<NamedGradReport> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& base = {});

}  // namespace msnet

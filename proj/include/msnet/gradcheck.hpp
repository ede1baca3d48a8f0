#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "msnet/tensor.hpp"

namespace msnet {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-5;
  // Gradients smaller than this are compared on an absolute scale; below it
  // the central difference is dominated by rounding in the loss itself.
  double abs_floor = 1e-4;
  // 0 checks every coordinate; otherwise a seeded sample per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_coordinate;
  std::size_t checked = 0;
  // Coordinates whose +/-h probe crossed a ReLU kink even at the smallest
  // step; finite differences are not a valid oracle there.
  std::size_t skipped_at_kinks = 0;
  double tol = 0.0;
  bool passed() const { return max_rel_error <= tol; }
};

using NamedTensor = std::pair<std::string, Tensor>;

/// Compares the analytic gradient of `fragment` (a scalar-valued function of
/// the leaf tensors in `wrt`) against central differences.
///
/// Throws StateError if two evaluations at the same point disagree, and
/// ArgumentError if h lies outside [1e-7, 1e-3].
GradCheckReport grad_check(const std::function<Tensor()>& fragment,
                           std::vector<NamedTensor> wrt, const GradCheckOptions& options = {});

}  // namespace msnet

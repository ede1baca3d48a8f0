#pragma once

#include <cstdint>
#include <vector>

#include "msnet/gradcheck.hpp"
#include "msnet/ops.hpp"
#include "msnet/optim.hpp"
#include "msnet/tensor.hpp"
#include "oracles.hpp"

namespace testing {

inline msnet::Tensor random_tensor(msnet::Shape shape, std::mt19937_64& rng,
                                   bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  const auto n = msnet::shape_numel(shape);
  return msnet::Tensor::from(std::move(shape), oracle::random_vec(n, rng, lo, hi), requires_grad);
}

/// sum(r * t) for a fixed random r, so every output element carries a
/// distinct upstream gradient.
inline msnet::Tensor weighted_sum(const msnet::Tensor& t, std::uint64_t seed) {
  auto rng = oracle::rng_for(seed + 1000003);
  auto r = msnet::Tensor::from(t.shape(), oracle::random_vec(t.numel(), rng), false);
  return msnet::dot(t, r);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<msnet::NamedTensor> named(const msnet::ParameterSet& params) {
  std::vector<msnet::NamedTensor> out;
  for (const auto& p : params.items()) out.emplace_back(p.name, p.tensor);
  return out;
}

/// Replaces a leaf's values with U(lo, hi) draws.
inline void randomize(msnet::Tensor& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  auto v = oracle::random_vec(t.numel(), rng, lo, hi);
  std::copy(v.begin(), v.end(), t.mutable_values().begin());
}

}  // namespace testing

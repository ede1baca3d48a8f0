#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "msnet/errors.hpp"
#include "msnet/tensor.hpp"

namespace msnet::detail {

// Builds an op output and, when any input needs a gradient and recording is
// on, attaches the inputs and the backward closure to it.
template <typename Inputs>
Tensor record_many(const char* op, Shape shape, std::vector<double> values,
                   const Inputs& inputs, std::function<void(Node&)> backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool needs_grad = false;
  if (grad_recording_enabled()) {
    for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

inline Tensor record(const char* op, Shape shape, std::vector<double> values,
                     std::initializer_list<Tensor> inputs, std::function<void(Node&)> backward) {
  return record_many(op, std::move(shape), std::move(values), inputs, std::move(backward));
}

}  // namespace msnet::detail

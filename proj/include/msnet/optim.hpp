#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "msnet/tensor.hpp"

namespace msnet {

struct Parameter {
  std::string name;
  Tensor tensor;
  std::vector<double> velocity;
};

/// Ordered, uniquely named collection of trainable tensors.
class ParameterSet {
 public:
  /// Registers a new leaf tensor with requires_grad set. Throws ConfigError
  /// on a duplicate name.
  Tensor add(const std::string& name, Tensor tensor);

  std::size_t size() const { return params_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  std::vector<Parameter>& items() { return params_; }
  const std::vector<Parameter>& items() const { return params_; }
  std::size_t scalar_count() const;

  void zero_grad();
  void clear_grad();
  void set_requires_grad(bool on);

  /// Copies values from `other`, which must hold the same names and shapes.
  void copy_values_from(const ParameterSet& other);
  /// 64-bit FNV-1a over names, shapes, and value bytes.
  std::uint64_t fingerprint() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// velocity <- momentum * velocity + grad; value <- value - lr * velocity.
void sgd_step(ParameterSet& params, double lr, double momentum);

struct LrSchedule {
  double base_lr = 0.01;
  int warmup_epochs = 5;
  int total_epochs = 300;
};

void validate(const LrSchedule& schedule);
/// Linear warmup to base_lr over warmup_epochs, then cosine decay.
double lr_at(const LrSchedule& schedule, int epoch);

using Rng = std::mt19937_64;

/// Independent stream for (seed, a, b): used so each sample's randomness
/// does not depend on processing order.
Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

double uniform(Rng& rng, double lo, double hi);
double normal(Rng& rng, double mean, double stddev);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

/// Kaiming-uniform fan-in initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

}  // namespace msnet

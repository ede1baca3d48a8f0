#include "msnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "msnet/errors.hpp"

namespace msnet {

Tensor ParameterSet::add(const std::string& name, Tensor tensor) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  tensor.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back({name, tensor, std::vector<double>(tensor.numel(), 0.0)});
  return tensor;
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw StateError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw StateError("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterSet::clear_grad() {
  for (auto& p : params_) p.tensor.clear_grad();
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.size() != size()) {
    throw StateError("parameter sets differ in size: " + std::to_string(size()) + " vs " +
                     std::to_string(other.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& dst = params_[i];
    const auto& src = other.params_[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw StateError("parameter mismatch at " + dst.name + " vs " + src.name);
    }
    auto from = src.tensor.values();
    auto to = dst.tensor.mutable_values();
    std::copy(from.begin(), from.end(), to.begin());
  }
}

std::uint64_t ParameterSet::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    for (auto d : p.tensor.shape()) mix(&d, sizeof d);
    auto v = p.tensor.values();
    mix(v.data(), v.size() * sizeof(double));
  }
  return h;
}

void sgd_step(ParameterSet& params, double lr, double momentum) {
  if (!(lr > 0.0)) throw ArgumentError("sgd_step: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ArgumentError("sgd_step: momentum must lie in [0, 1), got " + std::to_string(momentum));
  }
  for (auto& p : params.items()) {
    if (!p.tensor.has_grad()) throw StateError("sgd_step: missing gradient for " + p.name);
  }
  for (auto& p : params.items()) {
    auto g = p.tensor.grad();
    auto v = p.tensor.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      p.velocity[i] = momentum * p.velocity[i] + g[i];
      v[i] -= lr * p.velocity[i];
    }
  }
}

void validate(const LrSchedule& s) {
  if (!(s.base_lr > 0.0)) throw ConfigError("lr schedule: base_lr must be positive");
  if (s.total_epochs <= 0) throw ConfigError("lr schedule: total_epochs must be positive");
  if (s.warmup_epochs < 0 || s.warmup_epochs >= s.total_epochs) {
    throw ConfigError("lr schedule: warmup_epochs must lie in [0, total_epochs)");
  }
}

double lr_at(const LrSchedule& s, int epoch) {
  validate(s);
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw ArgumentError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                        std::to_string(s.total_epochs) + ")");
  }
  if (epoch < s.warmup_epochs) {
    return s.base_lr / s.warmup_epochs * (epoch + 1);
  }
  const double span = static_cast<double>(s.total_epochs - s.warmup_epochs);
  const double progress = (epoch - s.warmup_epochs) / span;
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) {
  // 53 random mantissa bits; avoids implementation-defined distributions so
  // streams match across standard libraries.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double normal(Rng& rng, double mean, double stddev) {
  double u1 = uniform(rng, 0.0, 1.0);
  while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform(rng, 0.0, 1.0) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  return order;
}

void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.mutable_values()) v = uniform(rng, -bound, bound);
}

}  // namespace msnet

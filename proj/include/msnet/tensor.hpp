#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace msnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;

  // Recorded only when some input requires a gradient and recording is on.
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles with an optional reverse-mode gradient.
///
/// A Tensor is a cheap shared handle. Values are fixed once an operation has
/// produced them; only leaf tensors (parameters, inputs) are mutated in
/// place, and only between forward passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Leaf tensors only; used by optimizers, initializers, and finite
  // differences.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Accumulates d(this)/d(leaf) into every reachable leaf's grad buffer.
  /// Interior gradients are recomputed from scratch on each call, so calling
  /// backward twice on the same graph doubles leaf gradients exactly.
  void backward() const;

  /// Copy of the values without any graph history.
  Tensor detach() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  const detail::Node& ref() const;
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// Hash of the sign pattern of every ReLU evaluated on this thread while
/// enabled. The gradient checker compares patterns at x and x +/- h to tell
/// whether a central difference straddles a kink.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  std::uint64_t signature() const;
  void reset();

  static bool active();
  static void record(std::span<const double> pre_activation);
};

}  // namespace msnet

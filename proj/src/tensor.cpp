#include "msnet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "msnet/errors.hpp"

namespace msnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

thread_local bool g_recording = true;

struct KinkState {
  int depth = 0;
  std::uint64_t hash = 0xcbf29ce484222325ULL;
};
thread_local KinkState g_kink;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1}, {value}, requires_grad));
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  std::vector<double> v(values);
  Shape s{v.size()};
  return Tensor(make_leaf(std::move(s), std::move(v), requires_grad));
}

const detail::Node& Tensor::ref() const {
  if (!node_) throw StateError("tensor: use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return ref().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return ref().values.size(); }

std::span<const double> Tensor::values() const { return ref().values; }

std::span<double> Tensor::mutable_values() {
  ref();
  if (!node_->is_leaf()) throw StateError("tensor: only leaf tensors are mutable");
  return node_->values;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("tensor: item() on non-scalar " + shape_str(shape()));
  }
  return ref().values[0];
}

double Tensor::operator[](std::size_t flat_index) const { return ref().values.at(flat_index); }

bool Tensor::requires_grad() const { return ref().requires_grad; }

void Tensor::set_requires_grad(bool on) {
  ref();
  if (!node_->is_leaf()) throw StateError("tensor: requires_grad is fixed on interior tensors");
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return !ref().grad.empty(); }

std::span<const double> Tensor::grad() const { return ref().grad; }

std::span<double> Tensor::mutable_grad() {
  ref();
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  ref();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  ref();
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const {
  const auto& n = ref();
  return Tensor(make_leaf(n.shape, n.values, false));
}

void Tensor::backward() const {
  const auto& root = ref();
  if (root.values.size() != 1) {
    throw ArgumentError("backward: loss must be a scalar, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->values.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->is_leaf()) n->backward_fn(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }

bool grad_recording_enabled() { return g_recording; }

KinkMonitor::KinkMonitor() {
  if (g_kink.depth++ == 0) reset();
}
KinkMonitor::~KinkMonitor() { --g_kink.depth; }

std::uint64_t KinkMonitor::signature() const { return g_kink.hash; }
void KinkMonitor::reset() { g_kink.hash = 0xcbf29ce484222325ULL; }

bool KinkMonitor::active() { return g_kink.depth > 0; }

void KinkMonitor::record(std::span<const double> pre_activation) {
  if (g_kink.depth == 0) return;
  std::uint64_t h = g_kink.hash;
  std::uint64_t word = 0;
  std::size_t bits = 0;
  auto flush = [&] {
    h ^= word + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0x100000001b3ULL;
    word = 0;
    bits = 0;
  };
  for (double x : pre_activation) {
    word = (word << 1) | (x > 0.0 ? 1u : 0u);
    if (++bits == 64) flush();
  }
  flush();
  g_kink.hash = h;
}

}  // namespace msnet

#pragma once

#include <span>
#include <vector>

#include "msnet/tensor.hpp"

namespace msnet {

// Differentiable primitives. Feature maps are [C, H, W]; vectors are [n];
// matrices are [rows, cols]. Every op validates shapes and raises
// DimensionError naming itself and the offending shapes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor mul_scalar(const Tensor& a, double s);
/// a * s where s is a learnable one-element tensor.
Tensor scale(const Tensor& a, const Tensor& s);

Tensor matmul(const Tensor& a, const Tensor& b);
/// [rows, cols] x [cols] -> [rows]
Tensor matvec(const Tensor& a, const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
/// Contiguous range [start, start+count) along axis 0.
Tensor slice(const Tensor& a, std::size_t start, std::size_t count);
/// One element as a scalar tensor.
Tensor select(const Tensor& a, std::size_t flat_index);

Tensor relu(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);

inline constexpr double kNormEpsilon = 1e-5;

/// Normalizes over the last axis, then applies per-feature gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kNormEpsilon);
/// Normalizes [C, H, W] over each group of C/groups channels and all pixels,
/// then applies per-channel gamma/beta.
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::size_t groups, double eps = kNormEpsilon);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
/// Unit L2 norm over the last axis.
Tensor l2_normalize(const Tensor& x);

struct Conv2dOptions {
  std::size_t stride = 1;
  // -1 selects floor(k/2), which preserves the spatial extent at stride 1.
  long padding = -1;
};

/// Cross-correlation of x [Cin, H, W] with weight [Cout, Cin, kh, kw],
/// zero padded; bias [Cout] is optional (pass an undefined Tensor to skip).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias = {},
              Conv2dOptions options = {});

/// [C, H, W] -> [C]
Tensor global_avg_pool(const Tensor& x);
/// 2x2 average pooling with stride 2; H and W must be even.
Tensor avg_pool2(const Tensor& x);

/// output(c, i, j) = x(c, i + dx, j + dy) where in bounds, else 0.
Tensor shift(const Tensor& x, long dx, long dy);

/// Windowed multi-head attention over [C, H, W] query/key/value maps.
/// Channels split into `heads` contiguous groups; each pixel attends to the
/// in-bounds pixels of the window x window neighborhood centered on it, with
/// logits q.k / sqrt(C/heads).
Tensor local_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       std::size_t heads, std::size_t window);

/// Attention weights of local_attention, laid out [heads, H, W, window*window]
/// with out-of-bounds neighbors holding 0. Not differentiable.
std::vector<double> local_attention_weights(const Tensor& q, const Tensor& k,
                                            std::size_t heads, std::size_t window);

}  // namespace msnet

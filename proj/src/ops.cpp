#include "msnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "msnet/errors.hpp"
#include "op_record.hpp"

namespace msnet {

using detail::Node;
using detail::record;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// Rows of the last axis: returns (row count, row length).
std::pair<std::size_t, std::size_t> rows_of(const char* op, const Tensor& x) {
  const auto& s = x.shape();
  if (s.empty()) throw DimensionError(std::string(op) + ": rank-0 input");
  const std::size_t n = s.back();
  if (n == 0) throw ArgumentError(std::string(op) + ": zero-length normalization axis");
  return {x.numel() / n, n};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return record("add", a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (auto& p : o.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return record("sub", a.shape(), std::move(out), {a, b}, [](Node& o) {
    if (o.parents[0]->requires_grad) {
      auto& g = o.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (o.parents[1]->requires_grad) {
      auto& g = o.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return record("mul", a.shape(), std::move(out), {a, b}, [](Node& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pb.values[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pa.values[i];
    }
  });
}

Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return record("mul_scalar", a.shape(), std::move(out), {a}, [s](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * s;
  });
}

Tensor scale(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("scale: factor must have one element, got " + shape_str(s.shape()));
  }
  const double f = s.item();
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * f;
  return record("scale", a.shape(), std::move(out), {a, s}, [](Node& o) {
    auto& pa = *o.parents[0];
    auto& ps = *o.parents[1];
    const double f = ps.values[0];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * f;
    }
    if (ps.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * pa.values[i];
      ps.grad_buffer()[0] += acc;
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return record("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += o.grad[i * n + j] * pb.values[p * n + j];
          g[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.values[i * k + p];
          for (std::size_t j = 0; j < n; ++j) g[p * n + j] += aip * o.grad[i * n + j];
        }
    }
  });
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.dim(1) != x.dim(0)) {
    throw DimensionError("matvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(x.shape()));
  }
  return reshape(matmul(a, reshape(x, {x.dim(0), 1})), {a.dim(0)});
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape("dot", a, b);
  double acc = 0.0;
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return record("dot", {1}, {acc}, {a, b}, [](Node& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    const double g0 = o.grad[0];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * pb.values[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * pa.values[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  auto av = a.values();
  const double acc = std::accumulate(av.begin(), av.end(), 0.0);
  return record("sum", {1}, {acc}, {a}, [](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (auto& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return record("reshape", std::move(shape), std::move(out), {a}, [](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                           shape_str(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  const std::size_t row = out_shape[axis] * inner;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    widths.push_back(w);
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(&pv[o * w], w, &out[o * row + offset]);
    offset += w;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return detail::record_many(
      "concat", std::move(out_shape), std::move(out), inputs,
      [widths, outer, row](Node& o) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < o.parents.size(); ++i) {
          const std::size_t w = widths[i];
          if (o.parents[i]->requires_grad) {
            auto& g = o.parents[i]->grad_buffer();
            for (std::size_t r = 0; r < outer; ++r)
              for (std::size_t j = 0; j < w; ++j) g[r * w + j] += o.grad[r * row + offset + j];
          }
          offset += w;
        }
      });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t start, std::size_t count) {
  const Shape& s = a.shape();
  if (s.empty() || count == 0 || start + count > s[0]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") invalid for " + shape_str(s));
  }
  const std::size_t inner = a.numel() / s[0];
  Shape out_shape = s;
  out_shape[0] = count;
  auto av = a.values();
  std::vector<double> out(av.begin() + start * inner, av.begin() + (start + count) * inner);
  const std::size_t base = start * inner;
  return record("slice", std::move(out_shape), std::move(out), {a}, [base](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[base + i] += o.grad[i];
  });
}

Tensor select(const Tensor& a, std::size_t flat_index) {
  if (flat_index >= a.numel()) {
    throw DimensionError("select: index " + std::to_string(flat_index) + " out of range for " +
                         shape_str(a.shape()));
  }
  return record("select", {1}, {a.values()[flat_index]}, {a}, [flat_index](Node& o) {
    o.parents[0]->grad_buffer()[flat_index] += o.grad[0];
  });
}

Tensor relu(const Tensor& a) {
  auto av = a.values();
  KinkMonitor::record(av);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return record("relu", a.shape(), std::move(out), {a}, [](Node& o) {
    auto& p = *o.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.values[i] > 0.0) g[i] += o.grad[i];
  });
}

Tensor sin(const Tensor& a) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(av[i]);
  return record("sin", a.shape(), std::move(out), {a}, [](Node& o) {
    auto& p = *o.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * std::cos(p.values[i]);
  });
}

Tensor cos(const Tensor& a) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::cos(av[i]);
  return record("cos", a.shape(), std::move(out), {a}, [](Node& o) {
    auto& p = *o.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i] * std::sin(p.values[i]);
  });
}

namespace {

// Shared normalization core: `segments` groups of `seg_len` contiguous values
// are standardized; `channel_of(i)` maps a flat index to its affine slot.
struct NormCache {
  std::vector<double> xhat;
  std::vector<double> inv_std;
};

template <typename ChannelOf>
Tensor normalize_affine(const char* op, const Tensor& x, const Tensor& gamma,
                        const Tensor& beta, std::size_t segments, std::size_t seg_len,
                        double eps, ChannelOf channel_of) {
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto cache = std::make_shared<NormCache>();
  cache->xhat.resize(xv.size());
  cache->inv_std.resize(segments);
  std::vector<double> out(xv.size());
  for (std::size_t s = 0; s < segments; ++s) {
    const double* seg = &xv[s * seg_len];
    double mu = 0.0;
    for (std::size_t i = 0; i < seg_len; ++i) mu += seg[i];
    mu /= static_cast<double>(seg_len);
    double var = 0.0;
    for (std::size_t i = 0; i < seg_len; ++i) var += (seg[i] - mu) * (seg[i] - mu);
    var /= static_cast<double>(seg_len);
    const double inv = 1.0 / std::sqrt(var + eps);
    cache->inv_std[s] = inv;
    for (std::size_t i = 0; i < seg_len; ++i) {
      const std::size_t idx = s * seg_len + i;
      const double xh = (seg[i] - mu) * inv;
      cache->xhat[idx] = xh;
      const std::size_t c = channel_of(idx);
      out[idx] = gv[c] * xh + bv[c];
    }
  }
  return record(op, x.shape(), std::move(out), {x, gamma, beta},
                [cache, segments, seg_len, channel_of](Node& o) {
                  auto& px = *o.parents[0];
                  auto& pg = *o.parents[1];
                  auto& pb = *o.parents[2];
                  if (pg.requires_grad) {
                    auto& g = pg.grad_buffer();
                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                      g[channel_of(i)] += o.grad[i] * cache->xhat[i];
                  }
                  if (pb.requires_grad) {
                    auto& g = pb.grad_buffer();
                    for (std::size_t i = 0; i < o.grad.size(); ++i) g[channel_of(i)] += o.grad[i];
                  }
                  if (!px.requires_grad) return;
                  auto& g = px.grad_buffer();
                  const double n = static_cast<double>(seg_len);
                  std::vector<double> dxh(seg_len);
                  for (std::size_t s = 0; s < segments; ++s) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t i = 0; i < seg_len; ++i) {
                      const std::size_t idx = s * seg_len + i;
                      dxh[i] = o.grad[idx] * pg.values[channel_of(idx)];
                      m1 += dxh[i];
                      m2 += dxh[i] * cache->xhat[idx];
                    }
                    m1 /= n;
                    m2 /= n;
                    const double inv = cache->inv_std[s];
                    for (std::size_t i = 0; i < seg_len; ++i) {
                      const std::size_t idx = s * seg_len + i;
                      g[idx] += inv * (dxh[i] - m1 - cache->xhat[idx] * m2);
                    }
                  }
                });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  auto [rows, n] = rows_of("layer_norm", x);
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: affine shapes " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match feature axis of " +
                         shape_str(x.shape()));
  }
  return normalize_affine("layer_norm", x, gamma, beta, rows, n, eps,
                          [n](std::size_t i) { return i % n; });
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::size_t groups, double eps) {
  if (x.rank() != 3) throw DimensionError("group_norm: expected [C,H,W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0);
  if (groups == 0 || c % groups != 0) {
    throw DimensionError("group_norm: " + std::to_string(groups) + " groups do not divide " +
                         std::to_string(c) + " channels");
  }
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("group_norm: affine shapes " + shape_str(gamma.shape()) +
                         " do not match " + std::to_string(c) + " channels");
  }
  const std::size_t hw = x.dim(1) * x.dim(2);
  return normalize_affine("group_norm", x, gamma, beta, groups, (c / groups) * hw, eps,
                          [hw](std::size_t i) { return i / hw; });
}

Tensor softmax(const Tensor& x) {
  auto [rows, n] = rows_of("softmax", x);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv[r * n];
    double* y = &out[r * n];
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (y[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= z;
  }
  return record("softmax", x.shape(), std::move(out), {x}, [rows, n](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += o.grad[r * n + i] * o.values[r * n + i];
      for (std::size_t i = 0; i < n; ++i)
        g[r * n + i] += o.values[r * n + i] * (o.grad[r * n + i] - s);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  auto [rows, n] = rows_of("log_softmax", x);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv[r * n];
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(in[i] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = in[i] - lse;
  }
  return record("log_softmax", x.shape(), std::move(out), {x}, [rows, n](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += o.grad[r * n + i];
      for (std::size_t i = 0; i < n; ++i)
        g[r * n + i] += o.grad[r * n + i] - std::exp(o.values[r * n + i]) * s;
    }
  });
}

Tensor l2_normalize(const Tensor& x) {
  auto [rows, n] = rows_of("l2_normalize", x);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += xv[r * n + i] * xv[r * n + i];
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0)) throw ArgumentError("l2_normalize: zero vector has no direction");
    (*norms)[r] = norm;
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = xv[r * n + i] / norm;
  }
  return record("l2_normalize", x.shape(), std::move(out), {x}, [rows, n, norms](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double yg = 0.0;
      for (std::size_t i = 0; i < n; ++i) yg += o.values[r * n + i] * o.grad[r * n + i];
      const double inv = 1.0 / (*norms)[r];
      for (std::size_t i = 0; i < n; ++i)
        g[r * n + i] += inv * (o.grad[r * n + i] - o.values[r * n + i] * yg);
    }
  });
}

}  // namespace msnet

#include <algorithm>
#include <cmath>
#include <string>

#include "msnet/errors.hpp"
#include "msnet/ops.hpp"
#include "op_record.hpp"

namespace msnet {

using detail::Node;
using detail::record;

namespace {

void require_chw(const char* op, const Tensor& x) {
  if (x.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected [C,H,W], got " + shape_str(x.shape()));
  }
}

struct ConvGeom {
  std::size_t cin, h, w, cout, kh, kw, stride, pad, oh, ow;
};

// Valid output range [lo, hi) along one axis for kernel offset `m`, so that
// o*stride + m - pad stays inside [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t m, std::size_t pad,
                                                std::size_t stride, std::size_t extent,
                                                std::size_t out_extent) {
  const long ml = static_cast<long>(m), pl = static_cast<long>(pad);
  const long sl = static_cast<long>(stride);
  long lo = 0;
  if (ml < pl) lo = (pl - ml + sl - 1) / sl;
  long hi = (static_cast<long>(extent) - 1 - ml + pl) / sl + 1;
  if (static_cast<long>(extent) - 1 - ml + pl < 0) hi = 0;
  hi = std::min<long>(hi, static_cast<long>(out_extent));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options) {
  require_chw("conv2d", x);
  if (weight.rank() != 4 || weight.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) +
                         " does not match input " + shape_str(x.shape()));
  }
  if (options.stride == 0) throw ArgumentError("conv2d: stride must be positive");
  ConvGeom g{};
  g.cin = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = options.stride;
  if (options.padding < 0) {
    if (g.kh != g.kw) throw DimensionError("conv2d: default padding needs a square kernel");
    g.pad = g.kh / 2;
  } else {
    g.pad = static_cast<std::size_t>(options.padding);
  }
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
  }
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(g.cout) + " output channels");
  }

  auto xv = x.values();
  auto wv = weight.values();
  std::vector<double> out(g.cout * g.oh * g.ow, 0.0);
  const std::size_t ohw = g.oh * g.ow;
  const bool pointwise = g.kh == 1 && g.kw == 1 && g.pad == 0 && g.stride == 1;
  for (std::size_t co = 0; co < g.cout; ++co) {
    double* op = &out[co * ohw];
    if (has_bias) std::fill(op, op + ohw, bias.values()[co]);
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const double* ip = &xv[ci * g.h * g.w];
      if (pointwise) {
        const double kv = wv[co * g.cin + ci];
        for (std::size_t p = 0; p < ohw; ++p) op[p] += kv * ip[p];
        continue;
      }
      for (std::size_t m = 0; m < g.kh; ++m) {
        auto [i0, i1] = valid_range(m, g.pad, g.stride, g.h, g.oh);
        for (std::size_t n = 0; n < g.kw; ++n) {
          const double kv = wv[((co * g.cin + ci) * g.kh + m) * g.kw + n];
          auto [j0, j1] = valid_range(n, g.pad, g.stride, g.w, g.ow);
          if (j1 <= j0) continue;
          for (std::size_t i = i0; i < i1; ++i) {
            const double* irow = ip + (i * g.stride + m - g.pad) * g.w;
            double* orow = op + i * g.ow;
            if (g.stride == 1) {
              const double* src = irow + (j0 + n - g.pad);
              double* dst = orow + j0;
              for (std::size_t j = 0; j < j1 - j0; ++j) dst[j] += kv * src[j];
            } else {
              for (std::size_t j = j0; j < j1; ++j)
                orow[j] += kv * irow[j * g.stride + n - g.pad];
            }
          }
        }
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return detail::record_many(
      "conv2d", {g.cout, g.oh, g.ow}, std::move(out), inputs, [g, has_bias, pointwise](Node& o) {
        auto& px = *o.parents[0];
        auto& pw = *o.parents[1];
        const std::size_t ohw = g.oh * g.ow;
        if (has_bias && o.parents[2]->requires_grad) {
          auto& gb = o.parents[2]->grad_buffer();
          for (std::size_t co = 0; co < g.cout; ++co) {
            double acc = 0.0;
            for (std::size_t p = 0; p < ohw; ++p) acc += o.grad[co * ohw + p];
            gb[co] += acc;
          }
        }
        double* gx = px.requires_grad ? px.grad_buffer().data() : nullptr;
        double* gw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
        for (std::size_t co = 0; co < g.cout; ++co) {
          const double* gp = &o.grad[co * ohw];
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double* ip = &px.values[ci * g.h * g.w];
            double* gip = gx ? gx + ci * g.h * g.w : nullptr;
            if (pointwise) {
              const std::size_t widx = co * g.cin + ci;
              if (gw) {
                double acc = 0.0;
                for (std::size_t p = 0; p < ohw; ++p) acc += gp[p] * ip[p];
                gw[widx] += acc;
              }
              if (gip) {
                const double kv = pw.values[widx];
                for (std::size_t p = 0; p < ohw; ++p) gip[p] += kv * gp[p];
              }
              continue;
            }
            for (std::size_t m = 0; m < g.kh; ++m) {
              auto [i0, i1] = valid_range(m, g.pad, g.stride, g.h, g.oh);
              for (std::size_t n = 0; n < g.kw; ++n) {
                const std::size_t widx = ((co * g.cin + ci) * g.kh + m) * g.kw + n;
                const double kv = pw.values[widx];
                auto [j0, j1] = valid_range(n, g.pad, g.stride, g.w, g.ow);
                if (j1 <= j0) continue;
                double acc = 0.0;
                for (std::size_t i = i0; i < i1; ++i) {
                  const std::size_t row = (i * g.stride + m - g.pad) * g.w;
                  const double* grow = gp + i * g.ow;
                  if (g.stride == 1) {
                    const double* src = ip + row + (j0 + n - g.pad);
                    const double* gsrc = grow + j0;
                    const std::size_t len = j1 - j0;
                    if (gw) {
                      for (std::size_t j = 0; j < len; ++j) acc += gsrc[j] * src[j];
                    }
                    if (gip) {
                      double* dst = gip + row + (j0 + n - g.pad);
                      for (std::size_t j = 0; j < len; ++j) dst[j] += kv * gsrc[j];
                    }
                  } else {
                    for (std::size_t j = j0; j < j1; ++j) {
                      const std::size_t col = j * g.stride + n - g.pad;
                      acc += grow[j] * ip[row + col];
                      if (gip) gip[row + col] += kv * grow[j];
                    }
                  }
                }
                if (gw) gw[widx] += acc;
              }
            }
          }
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  require_chw("global_avg_pool", x);
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  auto xv = x.values();
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t p = 0; p < hw; ++p) acc += xv[ch * hw + p];
    out[ch] = acc / static_cast<double>(hw);
  }
  return record("global_avg_pool", {c}, std::move(out), {x}, [c, hw](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) g[ch * hw + p] += o.grad[ch] * inv;
  });
}

Tensor avg_pool2(const Tensor& x) {
  require_chw("avg_pool2", x);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) {
    throw DimensionError("avg_pool2: spatial extent must be even, got " + shape_str(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  auto xv = x.values();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const double* p = &xv[(ch * h + 2 * i) * w + 2 * j];
        out[(ch * oh + i) * ow + j] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  return record("avg_pool2", {c, oh, ow}, std::move(out), {x}, [c, h, w, oh, ow](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const double d = 0.25 * o.grad[(ch * oh + i) * ow + j];
          double* p = &g[(ch * h + 2 * i) * w + 2 * j];
          p[0] += d;
          p[1] += d;
          p[w] += d;
          p[w + 1] += d;
        }
  });
}

Tensor shift(const Tensor& x, long dx, long dy) {
  require_chw("shift", x);
  const long c = static_cast<long>(x.dim(0)), h = static_cast<long>(x.dim(1)),
             w = static_cast<long>(x.dim(2));
  auto xv = x.values();
  std::vector<double> out(xv.size(), 0.0);
  const long i0 = std::max(0L, -dx), i1 = std::min(h, h - dx);
  const long j0 = std::max(0L, -dy), j1 = std::min(w, w - dy);
  for (long ch = 0; ch < c; ++ch)
    for (long i = i0; i < i1; ++i)
      for (long j = j0; j < j1; ++j)
        out[(ch * h + i) * w + j] = xv[(ch * h + i + dx) * w + j + dy];
  return record("shift", x.shape(), std::move(out), {x}, [=](Node& o) {
    auto& g = o.parents[0]->grad_buffer();
    for (long ch = 0; ch < c; ++ch)
      for (long i = i0; i < i1; ++i)
        for (long j = j0; j < j1; ++j)
          g[(ch * h + i + dx) * w + j + dy] += o.grad[(ch * h + i) * w + j];
  });
}

namespace {

struct AttnGeom {
  std::size_t c, h, w, heads, dim, window, radius;
};

AttnGeom attention_geometry(const Tensor& q, const Tensor& k, const Tensor* v,
                            std::size_t heads, std::size_t window) {
  require_chw("local_attention", q);
  if (k.shape() != q.shape() || (v && v->shape() != q.shape())) {
    throw DimensionError("local_attention: q/k/v shapes differ: " + shape_str(q.shape()) +
                         " vs " + shape_str(k.shape()) +
                         (v ? " vs " + shape_str(v->shape()) : std::string()));
  }
  if (heads == 0 || q.dim(0) % heads != 0) {
    throw DimensionError("local_attention: " + std::to_string(heads) +
                         " heads do not divide " + std::to_string(q.dim(0)) + " channels");
  }
  if (window == 0 || window % 2 == 0) {
    throw ArgumentError("local_attention: window must be odd, got " + std::to_string(window));
  }
  return {q.dim(0), q.dim(1), q.dim(2), heads, q.dim(0) / heads, window, window / 2};
}

// Softmax weights laid out [heads, H, W, window^2]; out-of-bounds slots are 0.
std::vector<double> attention_weights(const AttnGeom& g, std::span<const double> qv,
                                      std::span<const double> kv) {
  const std::size_t hw = g.h * g.w, kk = g.window * g.window;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(g.dim));
  std::vector<double> weights(g.heads * hw * kk, 0.0);
  std::vector<double> logits(kk);
  for (std::size_t l = 0; l < g.heads; ++l) {
    const std::size_t c0 = l * g.dim;
    for (std::size_t i = 0; i < g.h; ++i)
      for (std::size_t j = 0; j < g.w; ++j) {
        double mx = -INFINITY;
        for (std::size_t a = 0; a < g.window; ++a)
          for (std::size_t b = 0; b < g.window; ++b) {
            const long ii = static_cast<long>(i + a) - static_cast<long>(g.radius);
            const long jj = static_cast<long>(j + b) - static_cast<long>(g.radius);
            const std::size_t slot = a * g.window + b;
            if (ii < 0 || jj < 0 || ii >= static_cast<long>(g.h) || jj >= static_cast<long>(g.w)) {
              logits[slot] = -INFINITY;
              continue;
            }
            const std::size_t pn = static_cast<std::size_t>(ii) * g.w + static_cast<std::size_t>(jj);
            double s = 0.0;
            for (std::size_t d = 0; d < g.dim; ++d)
              s += qv[(c0 + d) * hw + i * g.w + j] * kv[(c0 + d) * hw + pn];
            logits[slot] = s * inv_sqrt;
            mx = std::max(mx, logits[slot]);
          }
        double z = 0.0;
        double* wrow = &weights[(l * hw + i * g.w + j) * kk];
        for (std::size_t s = 0; s < kk; ++s) {
          if (logits[s] == -INFINITY) continue;
          wrow[s] = std::exp(logits[s] - mx);
          z += wrow[s];
        }
        for (std::size_t s = 0; s < kk; ++s) wrow[s] /= z;
      }
  }
  return weights;
}

}  // namespace

std::vector<double> local_attention_weights(const Tensor& q, const Tensor& k,
                                            std::size_t heads, std::size_t window) {
  const auto g = attention_geometry(q, k, nullptr, heads, window);
  return attention_weights(g, q.values(), k.values());
}

Tensor local_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                       std::size_t window) {
  const auto g = attention_geometry(q, k, &v, heads, window);
  auto weights = std::make_shared<std::vector<double>>(attention_weights(g, q.values(), k.values()));
  const std::size_t hw = g.h * g.w, kk = g.window * g.window;
  auto vv = v.values();
  std::vector<double> out(g.c * hw, 0.0);
  for (std::size_t l = 0; l < g.heads; ++l)
    for (std::size_t i = 0; i < g.h; ++i)
      for (std::size_t j = 0; j < g.w; ++j) {
        const double* wrow = &(*weights)[(l * hw + i * g.w + j) * kk];
        for (std::size_t a = 0; a < g.window; ++a)
          for (std::size_t b = 0; b < g.window; ++b) {
            const double wt = wrow[a * g.window + b];
            if (wt == 0.0) continue;
            const std::size_t pn = (i + a - g.radius) * g.w + (j + b - g.radius);
            for (std::size_t d = 0; d < g.dim; ++d) {
              const std::size_t ch = l * g.dim + d;
              out[ch * hw + i * g.w + j] += wt * vv[ch * hw + pn];
            }
          }
      }

  return record("local_attention", q.shape(), std::move(out), {q, k, v}, [g, weights](Node& o) {
    auto& pq = *o.parents[0];
    auto& pk = *o.parents[1];
    auto& pv = *o.parents[2];
    const std::size_t hw = g.h * g.w, kk = g.window * g.window;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(g.dim));
    double* gq = pq.requires_grad ? pq.grad_buffer().data() : nullptr;
    double* gk = pk.requires_grad ? pk.grad_buffer().data() : nullptr;
    double* gv = pv.requires_grad ? pv.grad_buffer().data() : nullptr;
    std::vector<double> dw(kk);
    for (std::size_t l = 0; l < g.heads; ++l)
      for (std::size_t i = 0; i < g.h; ++i)
        for (std::size_t j = 0; j < g.w; ++j) {
          const std::size_t p = i * g.w + j;
          const double* wrow = &(*weights)[(l * hw + p) * kk];
          double wdw = 0.0;
          for (std::size_t a = 0; a < g.window; ++a)
            for (std::size_t b = 0; b < g.window; ++b) {
              const std::size_t s = a * g.window + b;
              dw[s] = 0.0;
              if (wrow[s] == 0.0) continue;
              const std::size_t pn = (i + a - g.radius) * g.w + (j + b - g.radius);
              for (std::size_t d = 0; d < g.dim; ++d) {
                const std::size_t ch = l * g.dim + d;
                const double go = o.grad[ch * hw + p];
                dw[s] += go * pv.values[ch * hw + pn];
                if (gv) gv[ch * hw + pn] += wrow[s] * go;
              }
              wdw += wrow[s] * dw[s];
            }
          for (std::size_t a = 0; a < g.window; ++a)
            for (std::size_t b = 0; b < g.window; ++b) {
              const std::size_t s = a * g.window + b;
              if (wrow[s] == 0.0) continue;
              const double dlogit = wrow[s] * (dw[s] - wdw) * inv_sqrt;
              const std::size_t pn = (i + a - g.radius) * g.w + (j + b - g.radius);
              for (std::size_t d = 0; d < g.dim; ++d) {
                const std::size_t ch = l * g.dim + d;
                if (gq) gq[ch * hw + p] += dlogit * pk.values[ch * hw + pn];
                if (gk) gk[ch * hw + pn] += dlogit * pq.values[ch * hw + p];
              }
            }
        }
  });
}

}  // namespace msnet

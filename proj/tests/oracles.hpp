#pragma once

// Independent reference implementations used only by tests. These are written
// as plain nested loops over std::vector so they share no code path with the
// library ops they check.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline std::mt19937_64 rng_for(std::uint64_t seed) { return std::mt19937_64(seed * 7919 + 17); }

inline Vec random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (auto& x : v) x = lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  return v;
}

/// g(co,i,j) = sum_{ci,m,n} w(co,ci,m,n) * x(ci, i+m-r, j+n-r), zero outside.
inline Vec direct_conv(const Vec& x, std::size_t cin, std::size_t h, std::size_t w,
                       const Vec& weight, std::size_t cout, std::size_t k) {
  const long r = static_cast<long>(k / 2);
  Vec out(cout * h * w, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (long i = 0; i < static_cast<long>(h); ++i)
      for (long j = 0; j < static_cast<long>(w); ++j) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (long m = 0; m < static_cast<long>(k); ++m)
            for (long n = 0; n < static_cast<long>(k); ++n) {
              const long ii = i + m - r, jj = j + n - r;
              if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(w))
                continue;
              acc += weight[((co * cin + ci) * k + m) * k + n] *
                     x[(ci * h + ii) * w + jj];
            }
        out[(co * h + i) * w + j] = acc;
      }
  return out;
}

/// Brute-force windowed multi-head attention. Returns outputs [C,H,W] and
/// fills `weight_sums` with the per-(head,pixel) sum of softmax weights.
inline Vec windowed_attention(const Vec& q, const Vec& k, const Vec& v, std::size_t c,
                              std::size_t h, std::size_t w, std::size_t heads,
                              std::size_t window, Vec* weight_sums = nullptr) {
  const std::size_t dim = c / heads;
  const long r = static_cast<long>(window / 2);
  Vec out(c * h * w, 0.0);
  if (weight_sums) weight_sums->clear();
  for (std::size_t l = 0; l < heads; ++l)
    for (long i = 0; i < static_cast<long>(h); ++i)
      for (long j = 0; j < static_cast<long>(w); ++j) {
        std::vector<double> logits;
        std::vector<std::pair<long, long>> nbrs;
        for (long a = i - r; a <= i + r; ++a)
          for (long b = j - r; b <= j + r; ++b) {
            if (a < 0 || b < 0 || a >= static_cast<long>(h) || b >= static_cast<long>(w)) continue;
            double s = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
              const std::size_t ch = l * dim + d;
              s += q[(ch * h + i) * w + j] * k[(ch * h + a) * w + b];
            }
            logits.push_back(s / std::sqrt(static_cast<double>(dim)));
            nbrs.emplace_back(a, b);
          }
        double mx = logits[0];
        for (double s : logits) mx = std::max(mx, s);
        double z = 0.0;
        for (double s : logits) z += std::exp(s - mx);
        double total = 0.0;
        for (std::size_t t = 0; t < logits.size(); ++t) {
          const double wt = std::exp(logits[t] - mx) / z;
          total += wt;
          for (std::size_t d = 0; d < dim; ++d) {
            const std::size_t ch = l * dim + d;
            out[(ch * h + i) * w + j] += wt * v[(ch * h + nbrs[t].first) * w + nbrs[t].second];
          }
        }
        if (weight_sums) weight_sums->push_back(total);
      }
  return out;
}

/// Least-squares line y = slope*x + intercept through the normal equations
/// of the 2x2 system [sum x^2, sum x; sum x, n] [b; k] = [sum xy; sum y].
struct Line {
  double slope, intercept;
};
inline Line normal_equations_fit(const std::vector<std::pair<double, double>>& pts) {
  double sxx = 0, sx = 0, sxy = 0, sy = 0;
  const double n = static_cast<double>(pts.size());
  for (auto [x, y] : pts) {
    sxx += x * x;
    sx += x;
    sxy += x * y;
    sy += y;
  }
  const double det = sxx * n - sx * sx;
  return {(sxy * n - sx * sy) / det, (sxx * sy - sx * sxy) / det};
}

/// z = ReLU(LN(W x + b)) with LN affine (gamma, beta), eps inside the sqrt.
inline Vec dense_ln_relu(const Vec& x, const Vec& w, const Vec& b, const Vec& gamma,
                         const Vec& beta, double eps = 1e-5) {
  const std::size_t out = b.size(), in = x.size();
  Vec y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
    y[o] = acc;
  }
  double mu = 0;
  for (double v : y) mu += v;
  mu /= static_cast<double>(out);
  double var = 0;
  for (double v : y) var += (v - mu) * (v - mu);
  var /= static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double n = gamma[o] * (y[o] - mu) / std::sqrt(var + eps) + beta[o];
    y[o] = n > 0 ? n : 0.0;
  }
  return y;
}

/// Harris map by direct 2-D Gaussian convolution (non-separable loops),
/// replicated borders, central differences (one-sided at the border).
inline Vec harris_map(const Vec& img, long h, long w, double sigma_i, double kappa, double ratio) {
  auto blur2d = [&](const Vec& g, double sigma) {
    const long rad = std::max(1L, static_cast<long>(std::ceil(3.0 * sigma)));
    Vec out(g.size(), 0.0);
    for (long r = 0; r < h; ++r)
      for (long c = 0; c < w; ++c) {
        double acc = 0.0, norm = 0.0;
        for (long a = -rad; a <= rad; ++a)
          for (long b = -rad; b <= rad; ++b) {
            const double k = std::exp(-0.5 * (a * a + b * b) / (sigma * sigma));
            const long rr = std::min(std::max(r + a, 0L), h - 1);
            const long cc = std::min(std::max(c + b, 0L), w - 1);
            acc += k * g[rr * w + cc];
            norm += k;
          }
        out[r * w + c] = acc / norm;
      }
    return out;
  };
  const double sd = ratio * sigma_i;
  const Vec s = blur2d(img, sd);
  Vec xx(s.size()), xy(s.size()), yy(s.size());
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      const long c0 = c > 0 ? c - 1 : c, c1 = c + 1 < w ? c + 1 : c;
      const long r0 = r > 0 ? r - 1 : r, r1 = r + 1 < h ? r + 1 : r;
      const double gx = (s[r * w + c1] - s[r * w + c0]) / static_cast<double>(c1 - c0);
      const double gy = (s[r1 * w + c] - s[r0 * w + c]) / static_cast<double>(r1 - r0);
      xx[r * w + c] = sd * sd * gx * gx;
      xy[r * w + c] = sd * sd * gx * gy;
      yy[r * w + c] = sd * sd * gy * gy;
    }
  xx = blur2d(xx, sigma_i);
  xy = blur2d(xy, sigma_i);
  yy = blur2d(yy, sigma_i);
  Vec out(s.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double tr = xx[i] + yy[i];
    out[i] = xx[i] * yy[i] - xy[i] * xy[i] - kappa * tr * tr;
  }
  return out;
}

}  // namespace oracle

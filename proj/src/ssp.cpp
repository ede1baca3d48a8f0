#include "msnet/ssp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "msnet/errors.hpp"
#include "msnet/text.hpp"

namespace msnet {

namespace {

struct Gradients {
  std::vector<double> gx, gy;
};

Gradients central_gradients(const std::vector<double>& g, long h, long w) {
  Gradients out{std::vector<double>(g.size()), std::vector<double>(g.size())};
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      const long cl = std::max(c - 1, 0L), cr = std::min(c + 1, w - 1);
      const long ru = std::max(r - 1, 0L), rd = std::min(r + 1, h - 1);
      out.gx[r * w + c] = (g[r * w + cr] - g[r * w + cl]) / static_cast<double>(cr - cl);
      out.gy[r * w + c] = (g[rd * w + c] - g[ru * w + c]) / static_cast<double>(rd - ru);
    }
  return out;
}

}  // namespace

std::vector<double> harris_response(const GrayImage& image, double sigma_i, double kappa,
                                    double derivative_ratio) {
  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  const double sigma_d = derivative_ratio * sigma_i;
  const auto smooth = blur_grid(image.pixels, image.height, image.width, sigma_d);
  const auto [gx, gy] = central_gradients(smooth, h, w);
  std::vector<double> xx(gx.size()), xy(gx.size()), yy(gx.size());
  const double norm = sigma_d * sigma_d;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    xx[i] = norm * gx[i] * gx[i];
    xy[i] = norm * gx[i] * gy[i];
    yy[i] = norm * gy[i] * gy[i];
  }
  xx = blur_grid(xx, image.height, image.width, sigma_i);
  xy = blur_grid(xy, image.height, image.width, sigma_i);
  yy = blur_grid(yy, image.height, image.width, sigma_i);
  std::vector<double> response(gx.size());
  for (std::size_t i = 0; i < gx.size(); ++i) {
    const double det = xx[i] * yy[i] - xy[i] * xy[i];
    const double tr = xx[i] + yy[i];
    response[i] = det - kappa * tr * tr;
  }
  return response;
}

std::vector<double> normalized_laplacian(const GrayImage& image, double sigma) {
  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  const auto g = blur_grid(image.pixels, image.height, image.width, sigma);
  std::vector<double> out(g.size());
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      const long cl = std::max(c - 1, 0L), cr = std::min(c + 1, w - 1);
      const long ru = std::max(r - 1, 0L), rd = std::min(r + 1, h - 1);
      const double center = g[r * w + c];
      const double lxx = g[r * w + cl] - 2 * center + g[r * w + cr];
      const double lyy = g[ru * w + c] - 2 * center + g[rd * w + c];
      out[r * w + c] = sigma * sigma * std::abs(lxx + lyy);
    }
  return out;
}

std::vector<KeyPoint> harris_laplace(const GrayImage& image, const HarrisLaplaceOptions& options) {
  const auto& scales = options.scales;
  if (scales.size() < 3) throw ArgumentError("harris_laplace: need at least 3 scales");
  for (std::size_t s = 0; s < scales.size(); ++s) {
    if (!(scales[s] > 0.0) || (s > 0 && !(scales[s] > scales[s - 1]))) {
      throw ArgumentError("harris_laplace: scales must be positive and increasing");
    }
  }
  if (options.kappa < 0.04 || options.kappa > 0.06) {
    throw ArgumentError("harris_laplace: kappa must lie in [0.04, 0.06]");
  }
  validate(image);

  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  std::vector<std::vector<double>> responses, laplacians;
  double max_response = 0.0;
  for (double sigma : scales) {
    responses.push_back(harris_response(image, sigma, options.kappa, options.derivative_ratio));
    laplacians.push_back(normalized_laplacian(image, sigma));
    for (double v : responses.back()) max_response = std::max(max_response, v);
  }
  if (!(max_response > 0.0)) return {};
  const double threshold = options.response_threshold * max_response;

  std::vector<KeyPoint> found;
  for (std::size_t s = 0; s < scales.size(); ++s) {
    const auto& R = responses[s];
    for (long r = 1; r + 1 < h; ++r)
      for (long c = 1; c + 1 < w; ++c) {
        const long idx = r * w + c;
        const double v = R[idx];
        if (!(v > threshold)) continue;
        if (image.pixels[idx] < options.intensity_threshold) continue;
        bool is_max = true;
        for (long dr = -1; dr <= 1 && is_max; ++dr)
          for (long dc = -1; dc <= 1; ++dc) {
            if ((dr || dc) && R[(r + dr) * w + c + dc] >= v) {
              is_max = false;
              break;
            }
          }
        if (!is_max) continue;
        const double lap = laplacians[s][idx];
        if (s > 0 && lap < laplacians[s - 1][idx]) continue;
        if (s + 1 < scales.size() && lap < laplacians[s + 1][idx]) continue;

        auto offset = [](double minus, double center, double plus) {
          const double curv = minus - 2 * center + plus;
          if (curv >= 0.0) return 0.0;
          return std::clamp(0.5 * (minus - plus) / curv, -0.49, 0.49);
        };
        KeyPoint kp;
        kp.x = static_cast<double>(c) + offset(R[idx - 1], v, R[idx + 1]);
        kp.y = static_cast<double>(r) + offset(R[idx - w], v, R[idx + w]);
        kp.scale = scales[s];
        kp.response = v;
        found.push_back(kp);
      }
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const KeyPoint& a, const KeyPoint& b) { return a.response > b.response; });
  std::vector<KeyPoint> kept;
  const double r2 = options.merge_radius * options.merge_radius;
  for (const auto& kp : found) {
    const bool near = std::any_of(kept.begin(), kept.end(), [&](const KeyPoint& k) {
      const double dx = k.x - kp.x, dy = k.y - kp.y;
      return dx * dx + dy * dy < r2;
    });
    if (!near) kept.push_back(kp);
  }
  return kept;
}

AxisFit fit_axis(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw ArgumentError("fit_axis: need at least 2 points");
  const double n = static_cast<double>(points.size());
  double sx = 0, sy = 0;
  for (auto [x, y] : points) {
    sx += x;
    sy += y;
  }
  AxisFit fit;
  fit.centroid_x = sx / n;
  fit.centroid_y = sy / n;
  double sxy = 0, sxx = 0;
  bool all_same_x = true;
  for (auto [x, y] : points) {
    sxy += x * y;
    sxx += x * x;
    all_same_x = all_same_x && x == points.front().first;
  }
  const double denom = sxx - n * fit.centroid_x * fit.centroid_x;
  if (all_same_x || !(denom > 0.0)) {
    fit.vertical = true;
    fit.angle_rad = std::numbers::pi / 2;
    return fit;
  }
  fit.slope = (sxy - n * fit.centroid_x * fit.centroid_y) / denom;
  fit.intercept = fit.centroid_y - fit.slope * fit.centroid_x;
  fit.angle_rad = std::atan(fit.slope);
  return fit;
}

AxisFit fit_axis(const std::vector<KeyPoint>& points) {
  std::vector<std::pair<double, double>> xy;
  xy.reserve(points.size());
  for (const auto& p : points) xy.emplace_back(p.x, p.y);
  return fit_axis(xy);
}

SizeEstimate measure_size(const std::vector<KeyPoint>& points, const AxisFit& fit,
                          const GrayImage& image) {
  if (points.size() < 2) throw DataError("degenerate size: fewer than 2 scattering points");
  double ux = 0.0, uy = 1.0;
  if (!fit.vertical) {
    const double norm = std::hypot(1.0, fit.slope);
    ux = 1.0 / norm;
    uy = fit.slope / norm;
  }
  double amin = INFINITY, amax = -INFINITY, pmin = INFINITY, pmax = -INFINITY;
  for (const auto& p : points) {
    const double along = p.x * ux + p.y * uy;
    const double across = -p.x * uy + p.y * ux;
    amin = std::min(amin, along);
    amax = std::max(amax, along);
    pmin = std::min(pmin, across);
    pmax = std::max(pmax, across);
  }
  const double res = image.resolution_m_per_px;
  const double cap = res * static_cast<double>(std::max(image.height, image.width));
  SizeEstimate est;
  est.length_m = std::min(res * (amax - amin), cap);
  est.width_m = std::min(res * (pmax - pmin), cap);
  est.axis_angle_rad = fit.angle_rad;
  if (!(est.length_m > 1e-12) || !(est.width_m > 1e-12)) {
    throw DataError("degenerate size: scattering points collapse to one coordinate");
  }
  return est;
}

std::pair<double, double> normalize_size(double length_m, double width_m,
                                         std::pair<double, double> phys_range) {
  const auto [lo, hi] = phys_range;
  if (!(lo < hi)) throw ArgumentError("normalize_size: range needs lo < hi");
  if (!(length_m > 0.0) || !(width_m > 0.0)) throw ArgumentError("normalize_size: sizes must be positive");
  auto map = [&](double v) { return std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0); };
  return {map(length_m), map(width_m)};
}

std::optional<SizeRecord> extract_size(const GrayImage& image, const std::string& path,
                                       const HarrisLaplaceOptions& options) {
  const auto points = harris_laplace(image, options);
  if (points.size() < 2) return std::nullopt;
  const auto fit = fit_axis(points);
  try {
    return SizeRecord{path, measure_size(points, fit, image), points.size()};
  } catch (const DataError&) {
    return std::nullopt;
  }
}

void write_size_csv(const std::filesystem::path& path, const std::vector<SizeRecord>& records) {
  std::ostringstream os;
  os << "path,length_m,width_m,axis_angle_rad,n_keypoints\n";
  for (const auto& r : records) {
    os << r.path << ',' << format_double(r.size.length_m) << ',' << format_double(r.size.width_m)
       << ',' << format_double(r.size.axis_angle_rad) << ',' << r.n_keypoints << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace msnet

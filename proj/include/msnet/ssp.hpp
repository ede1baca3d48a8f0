#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msnet/image.hpp"

namespace msnet {

struct KeyPoint {
  double x = 0.0;  // column
  double y = 0.0;  // row
  double scale = 0.0;
  double response = 0.0;
};

struct HarrisLaplaceOptions {
  std::vector<double> scales{1.2, 1.7, 2.4, 3.4, 4.8};
  double kappa = 0.04;
  // Relative to the largest Harris response over all scales.
  double response_threshold = 1e-4;
  double intensity_threshold = 0.5;
  // Ratio between the differentiation and integration scales.
  double derivative_ratio = 0.7;
  // Detections closer than this (pixels) are merged, keeping the strongest.
  double merge_radius = 2.0;
};

struct AxisFit {
  double slope = 0.0;
  double intercept = 0.0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  // All x coordinates equal: the axis is the vertical line x = centroid_x
  // and slope/intercept are undefined (left at 0).
  bool vertical = false;
  double angle_rad = 0.0;
};

struct SizeEstimate {
  double length_m = 0.0;
  double width_m = 0.0;
  double axis_angle_rad = 0.0;
};

/// Harris response R = det(M) - kappa * trace(M)^2 at integration scale
/// sigma_i, with derivatives taken at derivative_ratio * sigma_i and scaled
/// by the square of that scale. Borders replicate edge pixels.
std::vector<double> harris_response(const GrayImage& image, double sigma_i, double kappa,
                                    double derivative_ratio = 0.7);
/// Scale-normalized Laplacian magnitude sigma^2 |Lxx + Lyy|.
std::vector<double> normalized_laplacian(const GrayImage& image, double sigma);

/// Scale-adapted Harris corners that are also Laplacian extrema across
/// neighbouring scales and sit on bright pixels, sorted by descending response.
std::vector<KeyPoint> harris_laplace(const GrayImage& image, const HarrisLaplaceOptions& options = {});

/// Ordinary least squares y = slope * x + intercept.
AxisFit fit_axis(const std::vector<std::pair<double, double>>& points);
AxisFit fit_axis(const std::vector<KeyPoint>& points);

/// Extents of the points' projections along the axis and across it.
SizeEstimate measure_size(const std::vector<KeyPoint>& points, const AxisFit& fit,
                          const GrayImage& image);

/// Affine map onto [-1, 1] over [lo, hi], clamped.
std::pair<double, double> normalize_size(double length_m, double width_m,
                                         std::pair<double, double> phys_range = {0.0, 100.0});

struct SizeRecord {
  std::string path;
  SizeEstimate size;
  std::size_t n_keypoints = 0;
};

/// Full pipeline; std::nullopt when the keypoints do not determine a size.
std::optional<SizeRecord> extract_size(const GrayImage& image, const std::string& path,
                                       const HarrisLaplaceOptions& options = {});

/// CSV with header `path,length_m,width_m,axis_angle_rad,n_keypoints`.
void write_size_csv(const std::filesystem::path& path, const std::vector<SizeRecord>& records);

}  // namespace msnet

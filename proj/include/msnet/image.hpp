#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "msnet/tensor.hpp"

namespace msnet {

/// Single-channel intensity grid with pixels in [0, 1], row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;
  double resolution_m_per_px = 1.0;

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  double& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
};

inline constexpr std::size_t kMinImageExtent = 16;

GrayImage make_image(std::size_t height, std::size_t width, double fill = 0.0,
                     double resolution_m_per_px = 1.0);
/// Checks the pixel range, the minimum extent, and the resolution.
void validate(const GrayImage& image);

/// [1, H, W] tensor view of the pixels.
Tensor to_tensor(const GrayImage& image);

/// Reads an 8-bit single-channel binary PGM (P5) or PNG; pixels map to
/// value / 255. Throws DataError naming the path on any failure.
GrayImage read_image(const std::filesystem::path& path, double resolution_m_per_px = 1.0);
/// Writes 8-bit P5 PGM with round(255 * p). Throws IoError.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);
/// Picks PGM or PNG from the extension.
void write_image(const std::filesystem::path& path, const GrayImage& image);

/// Bilinear resample to the given size (pixel centers aligned).
GrayImage resize_bilinear(const GrayImage& image, std::size_t height, std::size_t width);
/// Separable Gaussian blur with clamp-to-edge borders; sigma <= 0 copies.
GrayImage gaussian_blur(const GrayImage& image, double sigma);
/// Same blur on an arbitrary real-valued row-major grid (no clamping).
std::vector<double> blur_grid(const std::vector<double>& grid, std::size_t height,
                              std::size_t width, double sigma);

/// Writes `bytes` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace msnet

#include "msnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "msnet/errors.hpp"

namespace msnet {

namespace fs = std::filesystem;

GrayImage make_image(std::size_t height, std::size_t width, double fill, double resolution) {
  GrayImage img;
  img.height = height;
  img.width = width;
  img.pixels.assign(height * width, fill);
  img.resolution_m_per_px = resolution;
  return img;
}

void validate(const GrayImage& image) {
  if (image.height < kMinImageExtent || image.width < kMinImageExtent) {
    throw ArgumentError("image: extent " + std::to_string(image.height) + "x" +
                        std::to_string(image.width) + " below the minimum of " +
                        std::to_string(kMinImageExtent));
  }
  if (image.pixels.size() != image.height * image.width) {
    throw ArgumentError("image: pixel count does not match extent");
  }
  if (!(image.resolution_m_per_px > 0.0)) throw ArgumentError("image: resolution must be positive");
  for (double p : image.pixels) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("image: pixel outside [0, 1]");
  }
}

Tensor to_tensor(const GrayImage& image) {
  return Tensor::from({1, image.height, image.width}, image.pixels);
}

namespace {

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GrayImage decode_pgm(const std::string& bytes, const fs::path& path, double resolution) {
  std::istringstream is(bytes);
  std::string magic;
  is >> magic;
  auto next_int = [&]() -> long {
    long v = -1;
    while (is >> std::ws && is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
    }
    is >> v;
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw DataError("unsupported or malformed PGM (need 8-bit P5): " + path.string());
  }
  is.get();  // single whitespace after maxval
  const auto offset = static_cast<std::size_t>(is.tellg());
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() < offset + n) throw DataError("truncated PGM: " + path.string());
  GrayImage img = make_image(static_cast<std::size_t>(h), static_cast<std::size_t>(w), 0.0, resolution);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
  return img;
}

GrayImage decode_png(const std::string& bytes, const fs::path& path, double resolution) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw DataError("malformed PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw DataError("malformed PNG " + path.string() + ": " + png.message);
  }
  GrayImage img = make_image(png.height, png.width, 0.0, resolution);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = buf[i] / 255.0;
  return img;
}

std::vector<unsigned char> to_bytes(const GrayImage& image) {
  std::vector<unsigned char> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = std::clamp(image.pixels[i], 0.0, 1.0);
    out[i] = static_cast<unsigned char>(std::lround(p * 255.0));
  }
  return out;
}

}  // namespace

GrayImage read_image(const fs::path& path, double resolution) {
  const std::string bytes = read_all(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path, resolution);
  if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 0x89 && bytes[1] == 'P')
    return decode_png(bytes, path, resolution);
  throw DataError("unrecognized image format: " + path.string());
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  std::string bytes = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  const auto px = to_bytes(image);
  bytes.append(px.begin(), px.end());
  write_file_atomic(path, bytes);
}

void write_png(const fs::path& path, const GrayImage& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_GRAY;
  const auto px = to_bytes(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, px.data(), 0, nullptr)) {
    throw IoError("PNG encode failed for " + path.string() + ": " + png.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, px.data(), 0, nullptr)) {
    throw IoError("PNG encode failed for " + path.string() + ": " + png.message);
  }
  bytes.resize(size);
  write_file_atomic(path, bytes);
}

void write_image(const fs::path& path, const GrayImage& image) {
  if (path.extension() == ".png") {
    write_png(path, image);
  } else {
    write_pgm(path, image);
  }
}

GrayImage resize_bilinear(const GrayImage& image, std::size_t height, std::size_t width) {
  GrayImage out = make_image(height, width, 0.0, image.resolution_m_per_px);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  out.resolution_m_per_px = image.resolution_m_per_px * sx;
  for (std::size_t r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = image.at(y0, x0) * (1 - fx) + image.at(y0, x1) * fx;
      const double bot = image.at(y1, x0) * (1 - fx) + image.at(y1, x1) * fx;
      out.at(r, c) = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

std::vector<double> blur_grid(const std::vector<double>& grid, std::size_t height,
                              std::size_t width, double sigma) {
  if (sigma <= 0.0) return grid;
  const long radius = std::max(1L, static_cast<long>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;
  const long h = static_cast<long>(height), w = static_cast<long>(width);
  std::vector<double> tmp(grid.size()), out(grid.size());
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * grid[r * w + std::clamp(c + i, 0L, w - 1)];
      tmp[r * w + c] = acc;
    }
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp[std::clamp(r + i, 0L, h - 1) * w + c];
      out[r * w + c] = acc;
    }
  return out;
}

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  GrayImage out = image;
  out.pixels = blur_grid(image.pixels, image.height, image.width, sigma);
  for (auto& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
  return out;
}

}  // namespace msnet

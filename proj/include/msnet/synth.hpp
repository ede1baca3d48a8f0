#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msnet/image.hpp"
#include "msnet/optim.hpp"
#include "msnet/ssp.hpp"

namespace msnet {

struct ClassSpec {
  std::string name;
  double length_m = 40.0;
  double wingspan_m = 36.0;
  int n_engines = 2;
  double scatter_brightness = 0.9;
  // Fuselage orientation is drawn uniformly from [-max_orientation_rad,
  // max_orientation_rad] relative to the image x axis.
  double max_orientation_rad = 0.1745;
};

struct SynthOptions {
  std::size_t image_size = 64;
  double resolution_m_per_px = 1.0;
  bool speckle = true;
  bool clutter = true;
  // Overrides the sampled orientation and disables the position jitter.
  std::optional<double> fixed_orientation_rad;
  double silhouette_level = 0.15;
  double background_level = 0.035;
  double scatterer_sigma_px = 1.0;
  double fuselage_half_width_px = 1.5;
  double wing_half_width_px = 1.0;
};

struct Slice {
  GrayImage image;
  SizeEstimate truth;
  std::string label;
  // Pixel positions (x = column, y = row) of every stamped scatterer.
  std::vector<std::pair<double, double>> scatterers;
};

void validate(const ClassSpec& spec);

/// Renders one aircraft slice: dim speckled silhouette, bright unspeckled
/// scatterers at nose, tail, wingtips and engines, clutter, clamp to [0, 1].
Slice gen_slice(const ClassSpec& spec, const SynthOptions& options, Rng& rng);

struct ManifestRecord {
  std::string path;
  std::string label;
  std::optional<double> length_m;
  std::optional<double> width_m;

  bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;

  /// Sorted distinct labels.
  std::vector<std::string> labels() const;
};

/// `allowed_labels` empty means any label is accepted. Paths resolve
/// relative to the manifest's directory, which becomes `root`.
DatasetManifest read_manifest(const std::filesystem::path& path,
                              const std::vector<std::string>& allowed_labels = {});
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Per-class counts; with long_tail the total is redistributed geometrically
/// (first class largest) so that max/min >= 10.
std::vector<std::size_t> class_counts(const std::vector<std::size_t>& counts, bool long_tail);

struct DatasetOptions {
  SynthOptions slice;
  std::string image_extension = ".pgm";
  bool write_sizes = true;
  std::string manifest_name = "manifest.csv";
};

/// Writes images under root/images and the manifest at root/manifest_name.
DatasetManifest gen_dataset(const std::vector<ClassSpec>& specs,
                            const std::vector<std::size_t>& counts, bool long_tail,
                            std::uint64_t seed, const std::filesystem::path& root,
                            const DatasetOptions& options = {});

/// Four well-separated aircraft classes used by the demos and tests.
std::vector<ClassSpec> default_class_specs();

}  // namespace msnet

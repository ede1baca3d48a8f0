#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msnet/image.hpp"
#include "msnet/synth.hpp"

namespace msnet {

enum class SizeSource { manifest, estimated, none };

const char* to_string(SizeSource source);

/// A decoded manifest row ready for the encoder.
struct Sample {
  std::string path;
  std::string label;
  GrayImage image;
  std::optional<std::pair<double, double>> size_m;
  SizeSource size_source = SizeSource::none;
};

/// Reads every image (DataError naming the path on failure). Rows without
/// size metadata fall back to a scattering-point estimate when
/// `estimate_missing_sizes` is set, and otherwise carry no size.
std::vector<Sample> load_samples(const DatasetManifest& manifest, bool estimate_missing_sizes = true,
                                 double resolution_m_per_px = 1.0);

}  // namespace msnet

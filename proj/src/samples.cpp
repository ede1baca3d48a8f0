#include "msnet/samples.hpp"

#include "msnet/ssp.hpp"

namespace msnet {

const char* to_string(SizeSource source) {
  switch (source) {
    case SizeSource::manifest:
      return "manifest";
    case SizeSource::estimated:
      return "estimated";
    case SizeSource::none:
      break;
  }
  return "none";
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, bool estimate_missing_sizes,
                                 double resolution_m_per_px) {
  std::vector<Sample> out;
  out.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    Sample s;
    s.path = rec.path;
    s.label = rec.label;
    s.image = read_image(manifest.root / rec.path, resolution_m_per_px);
    if (rec.length_m && rec.width_m) {
      s.size_m = std::pair{*rec.length_m, *rec.width_m};
      s.size_source = SizeSource::manifest;
    } else if (estimate_missing_sizes) {
      if (auto est = extract_size(s.image, rec.path)) {
        s.size_m = std::pair{est->size.length_m, est->size.width_m};
        s.size_source = SizeSource::estimated;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace msnet

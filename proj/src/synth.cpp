#include "msnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "msnet/errors.hpp"
#include "msnet/text.hpp"

namespace msnet {

namespace fs = std::filesystem;

namespace {

constexpr double kTailRatio = 12.0;
constexpr double kMinTailRatio = 10.0;

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

}  // namespace

void validate(const ClassSpec& spec) {
  if (spec.name.empty()) throw ArgumentError("class spec: empty name");
  if (!(spec.length_m > 0.0) || !(spec.wingspan_m > 0.0)) {
    throw ArgumentError("class spec " + spec.name + ": sizes must be positive");
  }
  if (spec.n_engines < 0 || spec.n_engines > 4 || spec.n_engines % 2 != 0) {
    throw ArgumentError("class spec " + spec.name + ": n_engines must be 0, 2 or 4");
  }
  if (!(spec.scatter_brightness > 0.0 && spec.scatter_brightness <= 1.0)) {
    throw ArgumentError("class spec " + spec.name + ": scatter_brightness must lie in (0, 1]");
  }
  if (!(spec.max_orientation_rad >= 0.0 && spec.max_orientation_rad < 1.5707963267948966)) {
    throw ArgumentError("class spec " + spec.name + ": orientation range must lie in [0, pi/2)");
  }
}

Slice gen_slice(const ClassSpec& spec, const SynthOptions& options, Rng& rng) {
  validate(spec);
  const std::size_t n = options.image_size;
  if (n < kMinImageExtent) throw ArgumentError("gen_slice: image_size below minimum");
  if (!(options.resolution_m_per_px > 0.0)) throw ArgumentError("gen_slice: resolution must be positive");

  const double len_px = spec.length_m / options.resolution_m_per_px;
  const double span_px = spec.wingspan_m / options.resolution_m_per_px;
  const double tilt = options.fixed_orientation_rad ? std::abs(*options.fixed_orientation_rad)
                                                    : spec.max_orientation_rad;
  const double margin = options.scatterer_sigma_px;
  const double half_x_full = std::max(len_px / 2, span_px / 2 * std::sin(tilt)) + margin;
  const double half_y = std::max(len_px / 2 * std::sin(tilt), span_px / 2) + margin;
  const double mid = (static_cast<double>(n) - 1.0) / 2.0;
  if (half_x_full > mid || half_y > mid) {
    throw ArgumentError("gen_slice: aircraft " + spec.name + " (" + format_double(spec.length_m) + " x " +
                        format_double(spec.wingspan_m) + " m) does not fit a " + std::to_string(n) +
                        " px image");
  }

  const double theta = options.fixed_orientation_rad
                           ? *options.fixed_orientation_rad
                           : uniform(rng, -spec.max_orientation_rad, spec.max_orientation_rad);
  double cx = mid, cy = mid;
  if (!options.fixed_orientation_rad) {
    const double jx = std::min(4.0, mid - half_x_full), jy = std::min(4.0, mid - half_y);
    cx += uniform(rng, -jx, jx);
    cy += uniform(rng, -jy, jy);
  }
  const double ux = std::cos(theta), uy = std::sin(theta);
  const double px = -uy, py = ux;

  Slice slice;
  slice.label = spec.name;
  slice.truth = {spec.length_m, spec.wingspan_m, theta};
  GrayImage& img = slice.image;
  img = make_image(n, n, options.background_level, options.resolution_m_per_px);

  const double nose_x = cx + ux * len_px / 2, nose_y = cy + uy * len_px / 2;
  const double tail_x = cx - ux * len_px / 2, tail_y = cy - uy * len_px / 2;
  const double tip1_x = cx + px * span_px / 2, tip1_y = cy + py * span_px / 2;
  const double tip2_x = cx - px * span_px / 2, tip2_y = cy - py * span_px / 2;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double x = static_cast<double>(c), y = static_cast<double>(r);
      const bool body = segment_distance(x, y, tail_x, tail_y, nose_x, nose_y) <= options.fuselage_half_width_px;
      const bool wing = segment_distance(x, y, tip2_x, tip2_y, tip1_x, tip1_y) <= options.wing_half_width_px;
      if (body || wing) img.at(r, c) = options.silhouette_level;
    }

  if (options.speckle) {
    for (auto& p : img.pixels) {
      double u = uniform(rng, 0.0, 1.0);
      while (u <= 0.0) u = uniform(rng, 0.0, 1.0);
      p *= -std::log(u);
    }
  }
  if (options.clutter) {
    for (auto& p : img.pixels) p += uniform(rng, 0.0, 0.03);
  }

  slice.scatterers = {{nose_x, nose_y}, {tail_x, tail_y}, {tip1_x, tip1_y}, {tip2_x, tip2_y}};
  const std::vector<double> engine_offsets =
      spec.n_engines == 4 ? std::vector<double>{0.25, 0.45}
                          : (spec.n_engines == 2 ? std::vector<double>{0.25} : std::vector<double>{});
  for (double f : engine_offsets) {
    const double d = f * span_px / 2;
    slice.scatterers.emplace_back(cx + px * d, cy + py * d);
    slice.scatterers.emplace_back(cx - px * d, cy - py * d);
  }
  const double s2 = 2.0 * options.scatterer_sigma_px * options.scatterer_sigma_px;
  const long reach = static_cast<long>(std::ceil(4.0 * options.scatterer_sigma_px));
  for (auto [sx, sy] : slice.scatterers) {
    const long c0 = std::lround(sx), r0 = std::lround(sy);
    for (long r = std::max(0L, r0 - reach); r <= std::min<long>(n - 1, r0 + reach); ++r)
      for (long c = std::max(0L, c0 - reach); c <= std::min<long>(n - 1, c0 + reach); ++c) {
        const double d2 = (c - sx) * (c - sx) + (r - sy) * (r - sy);
        auto& p = img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        p = std::max(p, spec.scatter_brightness * std::exp(-d2 / s2));
      }
  }
  for (auto& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
  return slice;
}

std::vector<std::string> DatasetManifest::labels() const {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.label);
  return {s.begin(), s.end()};
}

DatasetManifest read_manifest(const fs::path& path, const std::vector<std::string>& allowed_labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,label,length_m,width_m") {
    throw DataError("manifest " + path.string() + " row 0: header must be path,label,length_m,width_m");
  }
  const std::set<std::string> allowed(allowed_labels.begin(), allowed_labels.end());
  std::set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw DataError("manifest " + path.string() + " row " + std::to_string(row) + ": " + why);
    };
    const auto fields = split_csv(line);
    if (fields.size() != 4) fail("expected 4 fields, found " + std::to_string(fields.size()));
    ManifestRecord rec;
    rec.path = fields[0];
    rec.label = fields[1];
    if (rec.path.empty()) fail("empty path");
    if (rec.label.empty()) fail("empty label");
    if (!allowed.empty() && !allowed.count(rec.label)) fail("unknown class '" + rec.label + "'");
    if (!seen.insert(rec.path).second) fail("duplicate path " + rec.path);
    const bool has_len = !fields[2].empty(), has_wid = !fields[3].empty();
    if (has_len != has_wid) fail("length_m and width_m must be both present or both absent");
    if (has_len) {
      rec.length_m = parse_double(fields[2]);
      rec.width_m = parse_double(fields[3]);
      if (!rec.length_m || !rec.width_m || !(*rec.length_m > 0.0) || !(*rec.width_m > 0.0)) {
        fail("sizes must be positive numbers");
      }
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ostringstream os;
  os << "path,label,length_m,width_m\n";
  for (const auto& r : manifest.records) {
    if (r.path.find(',') != std::string::npos || r.label.find(',') != std::string::npos) {
      throw DataError("manifest fields may not contain commas: " + r.path);
    }
    os << r.path << ',' << r.label << ',';
    if (r.length_m && r.width_m) os << format_double(*r.length_m) << ',' << format_double(*r.width_m);
    else os << ',';
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

std::vector<std::size_t> class_counts(const std::vector<std::size_t>& counts, bool long_tail) {
  if (counts.empty()) throw ArgumentError("class_counts: no classes");
  for (auto c : counts) {
    if (c < 1) throw ArgumentError("class_counts: every class needs at least one sample");
  }
  if (!long_tail) return counts;
  if (counts.size() < 2) throw ArgumentError("class_counts: long-tail mode needs at least 2 classes");
  std::size_t total = 0;
  for (auto c : counts) total += c;
  const std::size_t k = counts.size();
  std::vector<double> weights(k);
  double wsum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    weights[i] = std::pow(kTailRatio, -static_cast<double>(i) / static_cast<double>(k - 1));
    wsum += weights[i];
  }
  std::vector<std::size_t> out(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(total * weights[i] / wsum)));
    assigned += out[i];
  }
  if (assigned < total) out[0] += total - assigned;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  if (static_cast<double>(*hi) < kMinTailRatio * static_cast<double>(*lo) || assigned > total) {
    throw ArgumentError("class_counts: total of " + std::to_string(total) +
                        " samples is too small for a 10:1 long tail");
  }
  return out;
}

DatasetManifest gen_dataset(const std::vector<ClassSpec>& specs, const std::vector<std::size_t>& counts,
                            bool long_tail, std::uint64_t seed, const fs::path& root,
                            const DatasetOptions& options) {
  if (specs.size() != counts.size()) throw ArgumentError("gen_dataset: one count per class spec");
  for (const auto& s : specs) validate(s);
  const auto per_class = class_counts(counts, long_tail);

  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("cannot create dataset directory " + (root / "images").string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.root = root;
  std::uint64_t index = 0;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    for (std::size_t i = 0; i < per_class[k]; ++i, ++index) {
      Rng rng = derive_rng(seed, index, 0x73796e7468);
      const Slice slice = gen_slice(specs[k], options.slice, rng);
      char name[32];
      std::snprintf(name, sizeof name, "%05llu", static_cast<unsigned long long>(index));
      const std::string rel = "images/" + specs[k].name + "_" + name + options.image_extension;
      write_image(root / rel, slice.image);
      ManifestRecord rec{rel, specs[k].name, std::nullopt, std::nullopt};
      if (options.write_sizes) {
        rec.length_m = slice.truth.length_m;
        rec.width_m = slice.truth.width_m;
      }
      manifest.records.push_back(std::move(rec));
    }
  }
  write_manifest(manifest, root / options.manifest_name);
  return manifest;
}

std::vector<ClassSpec> default_class_specs() {
  return {
      {"light", 22.0, 20.0, 2, 0.85, 0.1745},
      {"regional", 32.0, 30.0, 2, 0.9, 0.1745},
      {"narrowbody", 40.0, 42.0, 2, 0.95, 0.1745},
      {"widebody", 54.0, 50.0, 4, 1.0, 0.1745},
  };
}

}  // namespace msnet

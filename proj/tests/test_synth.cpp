#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "msnet/errors.hpp"
#include "msnet/image.hpp"
#include "msnet/synth.hpp"

using namespace msnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("msnet_test_synth_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_CASE("image I/O: PGM and PNG round trip at 8 bits") {
  const fs::path dir = scratch("io");
  GrayImage img = make_image(20, 17);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = (i * 37 % 256) / 255.0;
  for (const char* ext : {".pgm", ".png"}) {
    const fs::path p = dir / (std::string("img") + ext);
    write_image(p, img);
    const GrayImage back = read_image(p, 0.5);
    CHECK(back.height == 20);
    CHECK(back.width == 17);
    CHECK(back.resolution_m_per_px == 0.5);
    CHECK(back.pixels == img.pixels);
  }
  spit(dir / "bad.pgm", "P2\n3 3\n255\n");
  CHECK_THROWS_AS(read_image(dir / "bad.pgm"), DataError);
  spit(dir / "short.pgm", "P5\n4 4\n255\nabc");
  CHECK_THROWS_AS(read_image(dir / "short.pgm"), DataError);
  CHECK_THROWS_AS(read_image(dir / "missing.pgm"), DataError);
}

TEST_CASE("validate image") {
  CHECK_NOTHROW(validate(make_image(16, 16, 0.5)));
  CHECK_THROWS_AS(validate(make_image(15, 16, 0.5)), ArgumentError);
  CHECK_THROWS_AS(validate(make_image(16, 16, 1.5)), ArgumentError);
  GrayImage bad = make_image(16, 16, 0.5, 0.0);
  CHECK_THROWS_AS(validate(bad), ArgumentError);
}

TEST_CASE("gen_slice: deterministic without noise; truth is the spec") {
  const ClassSpec spec{"a", 30, 26, 4, 0.9, 0.2};
  SynthOptions opt;
  opt.speckle = false;
  opt.clutter = false;
  opt.fixed_orientation_rad = 0.1;
  Rng r1 = derive_rng(3, 0), r2 = derive_rng(3, 0), r3 = derive_rng(4, 0);
  const Slice a = gen_slice(spec, opt, r1), b = gen_slice(spec, opt, r2), c = gen_slice(spec, opt, r3);
  CHECK(a.image.pixels == b.image.pixels);
  CHECK(a.image.pixels == c.image.pixels);
  CHECK(a.truth.length_m == spec.length_m);
  CHECK(a.truth.width_m == spec.wingspan_m);
  CHECK(a.label == "a");
  CHECK(a.scatterers.size() == 8);
  CHECK_NOTHROW(validate(a.image));

  SynthOptions noisy;
  Rng s1 = derive_rng(9, 1), s2 = derive_rng(9, 1);
  CHECK(gen_slice(spec, noisy, s1).image.pixels == gen_slice(spec, noisy, s2).image.pixels);
}

TEST_CASE("gen_slice: speckle preserves the mean of a constant region") {
  const ClassSpec spec{"tiny", 10, 10, 0, 0.9, 0.0};
  SynthOptions opt;
  opt.image_size = 256;
  opt.clutter = false;
  Rng rng = derive_rng(11, 0);
  const Slice s = gen_slice(spec, opt, rng);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < 256; ++r)
    for (std::size_t c = 0; c < 256; ++c) {
      if (std::abs(static_cast<double>(r) - 127.5) < 20 && std::abs(static_cast<double>(c) - 127.5) < 20)
        continue;
      sum += s.image.at(r, c);
      ++count;
    }
  const double mean = sum / static_cast<double>(count);
  CHECK(std::abs(mean / opt.background_level - 1.0) < 0.05);
}

TEST_CASE("gen_slice: oversized aircraft and bad specs are rejected") {
  Rng rng = derive_rng(1, 0);
  CHECK_THROWS_AS(gen_slice(ClassSpec{"big", 70, 30, 2, 0.9, 0.17}, SynthOptions{}, rng), ArgumentError);
  CHECK_THROWS_AS(gen_slice(ClassSpec{"w", 30, 70, 2, 0.9, 0.17}, SynthOptions{}, rng), ArgumentError);
  CHECK_THROWS_AS(gen_slice(ClassSpec{"e", 30, 30, 3, 0.9, 0.17}, SynthOptions{}, rng), ArgumentError);
  CHECK_THROWS_AS(gen_slice(ClassSpec{"b", 30, 30, 2, 0.0, 0.17}, SynthOptions{}, rng), ArgumentError);
}

TEST_CASE("class_counts: plain and long-tailed") {
  CHECK(class_counts({100, 100, 100, 100}, false) == std::vector<std::size_t>{100, 100, 100, 100});
  for (std::size_t total : {200u, 400u, 1000u}) {
    const auto c = class_counts({total / 4, total / 4, total / 4, total / 4}, true);
    std::size_t sum = 0;
    for (auto v : c) sum += v;
    CHECK(sum == total);
    CHECK(*std::max_element(c.begin(), c.end()) >= 10 * *std::min_element(c.begin(), c.end()));
  }
  CHECK_THROWS_AS(class_counts({5, 0}, false), ArgumentError);
  CHECK_THROWS_AS(class_counts({2, 2, 2, 2}, true), ArgumentError);
}

TEST_CASE("gen_dataset: counts, uniqueness, long tail, reproducibility") {
  const auto specs = default_class_specs();
  const fs::path a = scratch("ds_a"), b = scratch("ds_b");
  const auto m = gen_dataset(specs, {100, 100, 100, 100}, false, 5, a);
  CHECK(m.records.size() == 400);
  std::set<std::string> paths;
  for (const auto& r : m.records) {
    paths.insert(r.path);
    CHECK(fs::exists(a / r.path));
  }
  CHECK(paths.size() == 400);
  CHECK(std::distance(fs::directory_iterator(a / "images"), fs::directory_iterator()) == 400);
  const auto back = read_manifest(a / "manifest.csv");
  CHECK(back.records == m.records);

  const auto t1 = gen_dataset(specs, {25, 25, 25, 25}, true, 8, b);
  std::map<std::string, int> per;
  for (const auto& r : t1.records) ++per[r.label];
  int lo = 1 << 30, hi = 0;
  for (auto& [k, v] : per) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(per.size() == 4);
  CHECK(hi >= 10 * lo);
  const std::string first = slurp(b / "manifest.csv");
  const std::string img0 = slurp(b / t1.records[7].path);
  gen_dataset(specs, {25, 25, 25, 25}, true, 8, b);
  CHECK(slurp(b / "manifest.csv") == first);
  CHECK(slurp(b / t1.records[7].path) == img0);
}

TEST_CASE("gen_dataset: unwritable root is an io error") {
  const fs::path f = scratch("blocked") / "file";
  spit(f, "x");
  CHECK_THROWS_AS(gen_dataset(default_class_specs(), {1, 1, 1, 1}, false, 1, f / "sub"), IoError);
}

TEST_CASE("manifest: round trip and errors") {
  const fs::path dir = scratch("manifest");
  DatasetManifest empty;
  write_manifest(empty, dir / "empty.csv");
  CHECK(slurp(dir / "empty.csv") == "path,label,length_m,width_m\n");
  CHECK(read_manifest(dir / "empty.csv").records.empty());

  DatasetManifest big;
  Rng rng = derive_rng(2, 0);
  for (int i = 0; i < 1000; ++i) {
    ManifestRecord r{"img/" + std::to_string(i) + ".pgm", "cls" + std::to_string(i % 7), {}, {}};
    if (i % 3) {
      r.length_m = uniform(rng, 10, 75);
      r.width_m = uniform(rng, 10, 75);
    }
    big.records.push_back(r);
  }
  write_manifest(big, dir / "big.csv");
  const auto back = read_manifest(dir / "big.csv");
  CHECK(back.records == big.records);
  CHECK(back.root == dir);
  CHECK(back.labels().size() == 7);

  spit(dir / "half.csv", "path,label,length_m,width_m\na.pgm,x,1,2\nb.pgm,x,3,\n");
  try {
    read_manifest(dir / "half.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  spit(dir / "unk.csv", "path,label,length_m,width_m\na.pgm,x,,\nb.pgm,zzz,,\n");
  CHECK_NOTHROW(read_manifest(dir / "unk.csv"));
  CHECK_THROWS_WITH_AS(read_manifest(dir / "unk.csv", {"x", "y"}), doctest::Contains("row 2"), DataError);
  spit(dir / "cols.csv", "path,label,length_m,width_m\na.pgm,x\n");
  CHECK_THROWS_AS(read_manifest(dir / "cols.csv"), DataError);
  spit(dir / "dup.csv", "path,label,length_m,width_m\na.pgm,x,,\na.pgm,x,,\n");
  CHECK_THROWS_AS(read_manifest(dir / "dup.csv"), DataError);
  spit(dir / "hdr.csv", "path,label\n");
  CHECK_THROWS_AS(read_manifest(dir / "hdr.csv"), DataError);
  CHECK_THROWS_AS(read_manifest(dir / "nope.csv"), DataError);
}

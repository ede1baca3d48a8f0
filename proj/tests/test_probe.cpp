#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "msnet/errors.hpp"
#include "msnet/probe.hpp"
#include "msnet/synth.hpp"
#include "msnet/text.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace msnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("msnet_probe_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DatasetManifest manifest_with(const std::map<std::string, std::size_t>& counts) {
  DatasetManifest m;
  for (const auto& [label, n] : counts)
    for (std::size_t i = 0; i < n; ++i) m.records.push_back({label + "_" + std::to_string(i) + ".pgm", label, {}, {}});
  return m;
}

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.stage_channels = {8, 16};
  c.blocks_per_stage = {1, 1};
  c.saem_enabled = {false, true};
  c.input_size = 16;
  c.groups = 2;
  c.saem_heads = 2;
  c.size_dim = 6;
  return c;
}

std::vector<Sample> random_samples(std::size_t n, std::size_t classes, std::uint64_t seed) {
  auto rng = oracle::rng_for(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.path = "img" + std::to_string(i);
    s.label = "c" + std::to_string(i % classes);
    s.image = make_image(16, 16);
    s.image.pixels = oracle::random_vec(256, rng, 0.0, 1.0);
    s.size_m = std::pair{20.0 + 10.0 * static_cast<double>(i % classes), 25.0};
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("split_labeled: fractions, rounding, determinism, nesting, errors") {
  const auto m = manifest_with({{"b738", 484}, {"a320", 97}, {"tiny", 3}});
  CHECK(split_labeled(m, {1.0, 4}).records == m.records);
  std::map<std::string, std::size_t> count;
  const auto tenth = split_labeled(m, {0.1, 4});
  for (const auto& r : tenth.records) ++count[r.label];
  CHECK(count["b738"] == 48);
  CHECK(count["a320"] == 9);
  CHECK(count["tiny"] == 1);
  CHECK(split_labeled(m, {0.1, 4}).records == tenth.records);
  CHECK(split_labeled(m, {0.1, 5}).records != tenth.records);

  std::set<std::string> prev;
  for (double f : {0.1, 0.2, 0.5, 1.0}) {
    std::set<std::string> cur;
    for (const auto& r : split_labeled(m, {f, 9}).records) cur.insert(r.path);
    CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
  CHECK_THROWS_AS(split_labeled(m, {0.0, 1}), ArgumentError);
  CHECK_THROWS_AS(split_labeled(m, {1.5, 1}), ArgumentError);
  CHECK_THROWS_AS(split_labeled(m, {0.5, 1}, {"b738", "a380"}), ArgumentError);
}

TEST_CASE("linear probe: separable toy set, zero epochs, monotone best") {
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
  for (std::size_t c = 0; c < 4; ++c)
    for (int i = 0; i < 10; ++i) {
      std::vector<double> v(8, 0.0);
      v[2 * c] = 1.0;
      x.push_back(v);
      y.push_back(c);
    }
  const std::vector<std::string> classes{"a", "b", "c", "d"};
  const auto r = train_linear_probe(x, y, classes, {50, 0.1, 0.9, 8, 1});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += r.head.predict(x[i]) == y[i];
  CHECK(correct == x.size());
  REQUIRE(r.history.size() == 50);
  CHECK(r.history.back().loss < r.history.front().loss);

  const auto init = train_linear_probe(x, y, classes, {0, 0.1, 0.9, 8, 1});
  CHECK(init.best_epoch == 0);
  CHECK(init.history.empty());
  std::size_t init_correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) init_correct += init.head.predict(x[i]) == y[i];
  CHECK(correct >= init_correct);
  CHECK(r.head.weight.values().size() == 32);

  CHECK_THROWS_AS(train_linear_probe(x, y, {"a"}, {}), DataError);
  CHECK_THROWS_AS(train_linear_probe(x, y, classes, {-1, 0.1, 0.9, 8, 1}), ConfigError);
}

TEST_CASE("linear_probe leaves the backbone untouched and validates labels") {
  const Encoder e = build_encoder(tiny_encoder(), 4);
  const auto before = e.params.fingerprint();
  const auto samples = random_samples(12, 3, 1);
  const auto r = linear_probe(e, samples, {10, 0.1, 0.9, 4, 2});
  CHECK(e.params.fingerprint() == before);
  CHECK(r.head.classes == std::vector<std::string>{"c0", "c1", "c2"});
  for (const auto& p : e.params.items()) CHECK_FALSE(p.tensor.has_grad());

  auto conflicting = samples;
  conflicting[1].path = conflicting[0].path;
  CHECK_THROWS_AS(linear_probe(e, conflicting, {}), DataError);
  CHECK_THROWS_AS(linear_probe(e, random_samples(4, 1, 2), {}), DataError);
}

TEST_CASE("evaluate: perfect, constant, and random predictors against a counting oracle") {
  const std::vector<std::string> classes{"x", "y", "z"};
  const std::vector<std::string> truth{"x", "y", "z", "x", "x", "y"};
  const auto perfect = evaluate_predictions(classes, truth, {0, 1, 2, 0, 0, 1});
  CHECK(perfect.accuracy == 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK((i == j || perfect.confusion.counts[i][j] == 0));

  const auto constant = evaluate_predictions(classes, truth, std::vector<std::size_t>(6, 0));
  CHECK(constant.accuracy == doctest::Approx(0.5));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(constant.confusion.counts[i][1] == 0);
    CHECK(constant.confusion.counts[i][2] == 0);
  }

  auto rng = oracle::rng_for(5);
  std::uniform_int_distribution<std::size_t> pick(0, 2);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::string> tr;
    std::vector<std::size_t> pr;
    std::map<std::string, std::size_t> per_class;
    std::size_t hits = 0;
    for (int i = 0; i < 60; ++i) {
      tr.push_back(classes[pick(rng)]);
      pr.push_back(pick(rng));
      ++per_class[tr.back()];
      hits += classes[pr.back()] == tr.back();
    }
    const auto ev = evaluate_predictions(classes, tr, pr);
    CHECK(ev.accuracy == static_cast<double>(hits) / 60.0);
    CHECK(ev.confusion.total() == 60);
    for (std::size_t i = 0; i < 3; ++i) {
      std::size_t row = 0;
      for (auto v : ev.confusion.counts[i]) row += v;
      CHECK(row == per_class[classes[i]]);
    }
  }
  CHECK_THROWS_AS(evaluate_predictions(classes, {"w"}, {0}), DataError);

  const fs::path dir = scratch("cm");
  write_confusion_csv(dir / "cm.csv", perfect.confusion);
  CHECK(slurp(dir / "cm.csv") == "label,x,y,z\nx,3,0,0\ny,0,2,0\nz,0,0,1\n");
  write_probe_metrics(dir / "metrics.csv", {{0.1, 0.5}, {1.0, 0.75}});
  CHECK(slurp(dir / "metrics.csv") == "split_fraction,accuracy\n0.1,0.5\n1,0.75\n");
}

TEST_CASE("evaluate on a model reports trace/total and rejects unknown labels") {
  const Encoder e = build_encoder(tiny_encoder(), 6);
  const auto train = random_samples(12, 3, 3);
  const auto r = linear_probe(e, train, {20, 0.1, 0.9, 4, 2});
  const auto ev = evaluate(e, r.head, train);
  CHECK(ev.accuracy == static_cast<double>(ev.confusion.trace()) / static_cast<double>(ev.confusion.total()));
  CHECK(ev.confusion.total() == 12);
  auto odd = train;
  odd[0].label = "c9";
  CHECK_THROWS_AS(evaluate(e, r.head, odd), DataError);

  const fs::path dir = scratch("missing");
  DatasetManifest m{dir, {{"nope.pgm", "c0", {}, {}}}};
  CHECK_THROWS_WITH_AS(evaluate(e, r.head, m), doctest::Contains("nope.pgm"), DataError);
}

TEST_CASE("export_embeddings: shape, byte-stable, equals encode") {
  EncoderConfig c = tiny_encoder();
  c.stage_channels = {4, 8};
  const Encoder e = build_encoder(c, 8);
  const auto samples = random_samples(5, 2, 9);
  const fs::path dir = scratch("emb");
  export_embeddings(e, samples, dir / "a.csv");
  export_embeddings(e, samples, dir / "b.csv");
  const std::string text = slurp(dir / "a.csv");
  CHECK(text == slurp(dir / "b.csv"));
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line == "path,label,e0,e1,e2,e3,e4,e5,e6,e7");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto f = split_csv(line);
    REQUIRE(f.size() == 10);
    const Tensor z = encode(e, samples[rows].image, samples[rows].size_m);
    for (std::size_t j = 0; j < 8; ++j) CHECK(*parse_double(f[2 + j]) == z.values()[j]);
    ++rows;
  }
  CHECK(rows == 5);
}

TEST_CASE("activation map: dimensions, min-max range, uniform under a zeroed tail") {
  const Encoder e = build_encoder(tiny_encoder(), 10);
  const auto samples = random_samples(1, 1, 11);
  const fs::path dir = scratch("act");
  export_activation_map(e, samples[0].image, dir / "act.pgm");
  const GrayImage back = read_image(dir / "act.pgm");
  CHECK(back.height == 16);
  CHECK(back.width == 16);
  const auto [lo, hi] = std::minmax_element(back.pixels.begin(), back.pixels.end());
  CHECK(*lo == 0.0);
  CHECK(*hi == 1.0);

  Encoder z = build_encoder(tiny_encoder(), 10);
  for (auto& p : z.params.items()) {
    if (p.name.rfind("encoder.stage2.", 0) == 0) {
      for (auto& v : p.tensor.mutable_values()) v = 0.0;
    }
  }
  const GrayImage flat = activation_map(z, make_image(16, 16, 0.4));
  for (double v : flat.pixels) CHECK(v == flat.pixels[0]);
}

TEST_CASE("synthetic classes are separable from raw 8x8 pixels") {
  const auto specs = default_class_specs();
  SynthOptions opt;
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
  for (std::size_t c = 0; c < specs.size(); ++c)
    for (std::uint64_t i = 0; i < 40; ++i) {
      Rng rng = derive_rng(77, c, i);
      const auto slice = gen_slice(specs[c], opt, rng);
      const auto small = resize_bilinear(slice.image, 8, 8);
      x.push_back(small.pixels);
      y.push_back(c);
    }
  std::vector<std::string> names;
  for (const auto& s : specs) names.push_back(s.name);
  std::vector<std::vector<double>> xtr, xte;
  std::vector<std::size_t> ytr, yte;
  for (std::size_t i = 0; i < x.size(); ++i) {
    (i % 4 == 0 ? xte : xtr).push_back(x[i]);
    (i % 4 == 0 ? yte : ytr).push_back(y[i]);
  }
  const auto r = train_linear_probe(xtr, ytr, names, {100, 0.05, 0.9, 16, 3});
  std::size_t hits = 0;
  for (std::size_t i = 0; i < xte.size(); ++i) hits += r.head.predict(xte[i]) == yte[i];
  const double acc = static_cast<double>(hits) / static_cast<double>(xte.size());
  MESSAGE("raw-pixel probe accuracy " << acc);
  CHECK(acc > 0.4);
}

#include <doctest.h>

#include <cmath>

#include "msnet/encoder.hpp"
#include "msnet/errors.hpp"
#include "msnet/gradcheck.hpp"
#include "msnet/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace msnet;

namespace {

using oracle::Vec;

Vec vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

EncoderConfig tiny_config(bool saem = true, bool sieb = true) {
  EncoderConfig c;
  c.stage_channels = {8, 16};
  c.blocks_per_stage = {1, 1};
  c.saem_enabled = {saem, saem};
  c.input_size = 16;
  c.groups = 2;
  c.saem_heads = 2;
  c.size_dim = 6;
  c.sieb_enabled = sieb;
  return c;
}

Tensor random_image(std::size_t n, std::uint64_t seed) {
  auto rng = oracle::rng_for(seed);
  return Tensor::from({1, n, n}, oracle::random_vec(n * n, rng, 0.0, 1.0));
}

// Plain residual CNN written with loops only.
struct Map {
  std::size_t c, h, w;
  Vec v;
};

Map conv(const Map& x, const Tensor& weight) {
  const std::size_t co = weight.dim(0), k = weight.dim(2);
  return {co, x.h, x.w, oracle::direct_conv(x.v, x.c, x.h, x.w, vec(weight), co, k)};
}

Map gnorm(const Map& x, const Tensor& gamma, const Tensor& beta, std::size_t groups) {
  Map out = x;
  const std::size_t per = x.c / groups, hw = x.h * x.w;
  for (std::size_t g = 0; g < groups; ++g) {
    double mu = 0, var = 0;
    const std::size_t n = per * hw;
    for (std::size_t i = 0; i < n; ++i) mu += x.v[g * n + i];
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) var += (x.v[g * n + i] - mu) * (x.v[g * n + i] - mu);
    var /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ch = g * per + i / hw;
      out.v[g * n + i] = gamma.values()[ch] * (x.v[g * n + i] - mu) / std::sqrt(var + 1e-5) + beta.values()[ch];
    }
  }
  return out;
}

Map relu_map(Map x) {
  for (auto& v : x.v) v = v > 0 ? v : 0.0;
  return x;
}

Map pool(const Map& x) {
  Map out{x.c, x.h / 2, x.w / 2, Vec(x.c * (x.h / 2) * (x.w / 2))};
  for (std::size_t c = 0; c < x.c; ++c)
    for (std::size_t i = 0; i < out.h; ++i)
      for (std::size_t j = 0; j < out.w; ++j) {
        double s = 0;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) s += x.v[(c * x.h + 2 * i + a) * x.w + 2 * j + b];
        out.v[(c * out.h + i) * out.w + j] = s / 4;
      }
  return out;
}

Vec plain_cnn(const Encoder& e, const Tensor& image) {
  const std::size_t g = e.config.groups;
  Map h{1, image.dim(1), image.dim(2), vec(image)};
  h = pool(relu_map(gnorm(conv(h, e.stem_conv), e.stem_gamma, e.stem_beta, g)));
  for (std::size_t s = 0; s < e.stages.size(); ++s) {
    if (s > 0) h = pool(h);
    for (const auto& b : e.stages[s]) {
      Map t = relu_map(gnorm(conv(h, b.reduce), b.gn1_gamma, b.gn1_beta, g));
      t = relu_map(gnorm(conv(t, b.conv), b.gn2_gamma, b.gn2_beta, g));
      t = gnorm(conv(t, b.expand), b.gn3_gamma, b.gn3_beta, g);
      const Map skip = b.shortcut.defined() ? conv(h, b.shortcut) : h;
      for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] += skip.v[i];
      h = relu_map(t);
    }
  }
  Vec out(h.c, 0.0);
  for (std::size_t c = 0; c < h.c; ++c) {
    for (std::size_t i = 0; i < h.h * h.w; ++i) out[c] += h.v[c * h.h * h.w + i];
    out[c] /= static_cast<double>(h.h * h.w);
  }
  return out;
}

}  // namespace

TEST_CASE("build_encoder: determinism, naming, size") {
  const Encoder a = build_encoder(EncoderConfig{}, 11), b = build_encoder(EncoderConfig{}, 11);
  const Encoder c = build_encoder(EncoderConfig{}, 12);
  CHECK(a.params.fingerprint() == b.params.fingerprint());
  CHECK(a.params.fingerprint() != c.params.fingerprint());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params.items()[i].name == b.params.items()[i].name);
    CHECK(vec(a.params.items()[i].tensor) == vec(b.params.items()[i].tensor));
  }
  CHECK(a.params.scalar_count() < 2'000'000);
  CHECK(a.params.contains("encoder.stage2.block1.saem.alpha"));
  CHECK(a.params.contains("encoder.sieb.proj.weight"));

  EncoderConfig no_saem;
  no_saem.saem_enabled = {false, false, false};
  const Encoder plain = build_encoder(no_saem, 11);
  for (const auto& p : plain.params.items()) CHECK(p.name.find("saem") == std::string::npos);
  CHECK(report_fusion_ratios(plain).empty());
  CHECK(report_fusion_ratios(a).size() == 6);
}

TEST_CASE("build_encoder: invalid configs name the problem") {
  EncoderConfig c;
  c.input_size = 60;
  CHECK_THROWS_WITH_AS(build_encoder(c, 0), doctest::Contains("divisible"), ConfigError);
  c = {};
  c.saem_heads = 3;
  CHECK_THROWS_AS(build_encoder(c, 0), ConfigError);
  c = {};
  c.blocks_per_stage = {2, 2};
  CHECK_THROWS_AS(build_encoder(c, 0), ConfigError);
  c = {};
  c.size_range = {100, 0};
  CHECK_THROWS_AS(build_encoder(c, 0), ConfigError);
}

TEST_CASE("encode: shapes, SIEB behaviour, determinism, errors") {
  const Encoder e = build_encoder(EncoderConfig{}, 3);
  const Tensor img = random_image(64, 1);
  const auto z0 = encode(e, img);
  CHECK(z0.shape() == Shape{64});
  CHECK(vec(z0) == vec(backbone_features(e, img)));
  const auto za = encode(e, img, std::pair{30.0, 28.0});
  const auto zb = encode(e, img, std::pair{52.0, 48.0});
  CHECK(za.shape() == Shape{64});
  CHECK(testing::max_abs_diff(za.values(), zb.values()) > 1e-6);
  CHECK(vec(encode(e, img, std::pair{30.0, 28.0})) == vec(za));

  EncoderConfig no_sieb;
  no_sieb.sieb_enabled = false;
  const Encoder f = build_encoder(no_sieb, 3);
  CHECK(vec(encode(f, img, std::pair{30.0, 28.0})) == vec(backbone_features(f, img)));

  CHECK_THROWS_AS(encode(e, random_image(32, 2)), ArgumentError);
}

TEST_CASE("plain configuration equals an independently assembled residual CNN") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Encoder e = build_encoder(tiny_config(false, false), seed);
    const Tensor img = random_image(16, seed + 5);
    CHECK(testing::max_abs_diff(encode(e, img).values(), plain_cnn(e, img)) < 1e-12);
  }
  EncoderConfig desk;
  desk.saem_enabled = {false, false, false};
  desk.sieb_enabled = false;
  const Encoder e = build_encoder(desk, 9);
  const Tensor img = random_image(64, 9);
  CHECK(testing::max_abs_diff(encode(e, img).values(), plain_cnn(e, img)) < 1e-12);
}

TEST_CASE("full encoder gradient check on a 16x16 configuration") {
  EncoderConfig c = tiny_config();
  const Encoder e = build_encoder(c, 21);
  auto rng = oracle::rng_for(21);
  for (auto& p : e.params.items()) {
    if (p.name.find("beta") != std::string::npos && p.name.find("saem") == std::string::npos) {
      testing::randomize(const_cast<Tensor&>(p.tensor), rng, -0.2, 0.2);
    }
  }
  const Tensor img = random_image(16, 22);
  GradCheckOptions opt;
  opt.max_coords_per_tensor = 24;
  opt.seed = 3;
  const auto report = grad_check([&] { return sum(encode(e, img, std::pair{35.0, 30.0})); },
                                 testing::named(e.params), opt);
  INFO("worst " << report.worst_coordinate << " skipped " << report.skipped_at_kinks);
  CHECK(report.max_rel_error < 1e-5);
  CHECK(report.checked > 200);
}

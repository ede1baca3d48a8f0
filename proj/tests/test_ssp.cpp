#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "msnet/errors.hpp"
#include "msnet/ssp.hpp"
#include "msnet/synth.hpp"
#include "oracles.hpp"

using namespace msnet;

namespace {

GrayImage blob_image(double cx, double cy, double sigma = 0.8, std::size_t n = 24) {
  GrayImage img = make_image(n, n, 0.02);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double d2 = (c - cx) * (c - cx) + (r - cy) * (r - cy);
      img.at(r, c) = std::max(img.at(r, c), std::exp(-d2 / (2 * sigma * sigma)));
    }
  return img;
}

GrayImage rotate90(const GrayImage& in) {
  GrayImage out = make_image(in.width, in.height, 0.0, in.resolution_m_per_px);
  for (std::size_t r = 0; r < in.height; ++r)
    for (std::size_t c = 0; c < in.width; ++c) out.at(c, in.height - 1 - r) = in.at(r, c);
  return out;
}

Slice cross_slice(std::uint64_t seed, double length = 40.0, double span = 24.0) {
  ClassSpec spec{"cross", length, span, 2, 0.95, 0.1745};
  SynthOptions opt;
  Rng rng = derive_rng(seed, 0, 0);
  return gen_slice(spec, opt, rng);
}

KeyPoint kp(double x, double y) { return {x, y, 1.2, 1.0}; }

}  // namespace

TEST_CASE("harris_laplace: constant image has no keypoints") {
  CHECK(harris_laplace(make_image(32, 32, 0.7)).empty());
  CHECK(harris_laplace(make_image(32, 32, 0.0)).empty());
}

TEST_CASE("harris_response matches a direct 2-D convolution oracle") {
  const GrayImage img = blob_image(10, 10);
  for (double sigma : {1.2, 2.4, 4.8}) {
    const auto got = harris_response(img, sigma, 0.04, 0.7);
    const auto want = oracle::harris_map(img.pixels, 24, 24, sigma, 0.04, 0.7);
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    CHECK(worst < 1e-12);
    const auto best = std::max_element(want.begin(), want.end()) - want.begin();
    CHECK(std::abs(static_cast<double>(best % 24) - 10.0) <= 1.0);
    CHECK(std::abs(static_cast<double>(best / 24) - 10.0) <= 1.0);
  }
}

TEST_CASE("harris_laplace: single blob gives exactly one keypoint at its centre") {
  const auto pts = harris_laplace(blob_image(10, 10));
  REQUIRE(pts.size() == 1);
  CHECK(std::hypot(pts[0].x - 10.0, pts[0].y - 10.0) <= 1.0);
}

TEST_CASE("harris_laplace: cross target keypoints sit on bright pixels") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Slice s = cross_slice(seed);
    HarrisLaplaceOptions opt;
    const auto pts = harris_laplace(s.image, opt);
    CHECK(pts.size() >= 5);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto r = static_cast<std::size_t>(std::lround(pts[i].y));
      const auto c = static_cast<std::size_t>(std::lround(pts[i].x));
      CHECK(s.image.at(r, c) >= opt.intensity_threshold);
      CHECK(pts[i].x >= 0.0);
      CHECK(pts[i].x < 64.0);
      if (i > 0) CHECK(pts[i - 1].response >= pts[i].response);
    }
  }
}

TEST_CASE("harris_laplace: detections rotate with the image") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Slice s = cross_slice(seed);
    const auto a = harris_laplace(s.image);
    const auto b = harris_laplace(rotate90(s.image));
    REQUIRE(a.size() == b.size());
    const double n = static_cast<double>(s.image.height);
    for (const auto& p : a) {
      const double rx = n - 1 - p.y, ry = p.x;
      const bool matched = std::any_of(b.begin(), b.end(), [&](const KeyPoint& q) {
        return std::hypot(q.x - rx, q.y - ry) <= 1.0;
      });
      CHECK(matched);
    }
  }
}

TEST_CASE("harris_laplace: argument errors") {
  HarrisLaplaceOptions opt;
  opt.scales = {1.2, 1.7};
  CHECK_THROWS_AS(harris_laplace(make_image(32, 32, 0.1), opt), ArgumentError);
  opt = {};
  opt.kappa = 0.1;
  CHECK_THROWS_AS(harris_laplace(make_image(32, 32, 0.1), opt), ArgumentError);
  CHECK_THROWS_AS(harris_laplace(make_image(8, 8, 0.1)), ArgumentError);
}

TEST_CASE("fit_axis: examples") {
  auto f = fit_axis(std::vector<std::pair<double, double>>{{0, 0}, {1, 1}, {2, 2}});
  CHECK(f.slope == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(f.intercept) < 1e-15);
  CHECK(f.centroid_x == 1.0);
  CHECK(f.centroid_y == 1.0);
  f = fit_axis(std::vector<std::pair<double, double>>{{0, 1}, {1, 3}, {2, 5}});
  CHECK(std::abs(f.slope - 2.0) < 1e-12);
  CHECK(std::abs(f.intercept - 1.0) < 1e-12);
  f = fit_axis(std::vector<std::pair<double, double>>{{0, 0}, {1, 1}, {2, 1}});
  const auto o = oracle::normal_equations_fit({{0, 0}, {1, 1}, {2, 1}});
  CHECK(std::abs(f.slope - o.slope) < 1e-12);
  CHECK(std::abs(f.intercept - o.intercept) < 1e-12);
  CHECK(std::abs(f.slope - 0.5) < 1e-12);
  CHECK(std::abs(f.intercept - 1.0 / 6.0) < 1e-12);
}

TEST_CASE("fit_axis: random sets match the normal equations; translation equivariance") {
  auto rng = oracle::rng_for(5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 20;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = oracle::random_vec(2, rng, -30, 30);
      pts.emplace_back(v[0], v[1]);
    }
    const auto f = fit_axis(pts);
    const auto o = oracle::normal_equations_fit(pts);
    CHECK(std::abs(f.slope - o.slope) < 1e-9 * std::max(1.0, std::abs(o.slope)));
    CHECK(std::abs(f.intercept - o.intercept) < 1e-9 * std::max(1.0, std::abs(o.intercept)));
    CHECK(std::abs(f.centroid_y - (f.slope * f.centroid_x + f.intercept)) < 1e-9);

    const double dx = 7.5, dy = -3.25;
    auto moved = pts;
    for (auto& [x, y] : moved) {
      x += dx;
      y += dy;
    }
    const auto g = fit_axis(moved);
    CHECK(std::abs(g.centroid_x - f.centroid_x - dx) < 1e-9);
    CHECK(std::abs(g.centroid_y - f.centroid_y - dy) < 1e-9);
    CHECK(std::abs(g.slope - f.slope) < 1e-9 * std::max(1.0, std::abs(f.slope)));
    CHECK(std::abs(g.intercept - (f.intercept + dy - f.slope * dx)) <
          1e-8 * std::max(1.0, std::abs(f.intercept)));
  }
}

TEST_CASE("fit_axis: vertical points give a flagged fit; too few points error") {
  const auto f = fit_axis(std::vector<std::pair<double, double>>{{3, 0}, {3, 5}, {3, 9}});
  CHECK(f.vertical);
  CHECK(f.angle_rad == doctest::Approx(std::numbers::pi / 2));
  CHECK(std::isfinite(f.slope));
  CHECK_THROWS_AS(fit_axis(std::vector<std::pair<double, double>>{{1, 1}}), ArgumentError);
}

TEST_CASE("measure_size: definition, invariance, degeneracy") {
  const GrayImage img = make_image(64, 64, 0.0, 1.0);
  std::vector<KeyPoint> two{kp(10, 20), kp(40, 20)};
  auto fit = fit_axis(two);
  CHECK_THROWS_AS(measure_size(two, fit, img), DataError);  // zero width

  std::vector<KeyPoint> pts{kp(10, 20), kp(40, 20), kp(25, 10), kp(25, 32)};
  fit = fit_axis(pts);
  auto est = measure_size(pts, fit, img);
  CHECK(est.length_m == doctest::Approx(30.0));
  CHECK(est.width_m == doctest::Approx(22.0));
  std::reverse(pts.begin(), pts.end());
  std::swap(pts[1], pts[2]);
  const auto again = measure_size(pts, fit_axis(pts), img);
  CHECK(again.length_m == est.length_m);
  CHECK(again.width_m == est.width_m);

  std::vector<KeyPoint> one{kp(10, 10)};
  CHECK_THROWS_AS(measure_size(one, AxisFit{}, img), DataError);

  GrayImage half = img;
  half.resolution_m_per_px = 0.5;
  CHECK(measure_size(std::vector<KeyPoint>{kp(10, 20), kp(40, 20), kp(25, 10), kp(25, 32)}, fit, half)
            .length_m == doctest::Approx(15.0));
}

TEST_CASE("measure_size: collinear fit has zero residual and exact length") {
  const GrayImage img = make_image(64, 64, 0.0, 1.0);
  std::vector<KeyPoint> pts{kp(5, 7), kp(15, 12), kp(35, 22)};
  const auto fit = fit_axis(pts);
  for (const auto& p : pts) CHECK(std::abs(p.y - (fit.slope * p.x + fit.intercept)) < 1e-12);
  auto with_offaxis = pts;
  with_offaxis.push_back(kp(20, 14.5 + 1.0));
  const auto est = measure_size(with_offaxis, fit, img);
  CHECK(std::abs(est.length_m - std::hypot(30.0, 15.0)) < 1e-9);
}

TEST_CASE("measure_size: synthetic cross recovers 40 x 24 within 2 m") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Slice s = cross_slice(seed);
    const auto rec = extract_size(s.image, "cross");
    REQUIRE(rec.has_value());
    CHECK(std::abs(rec->size.length_m - 40.0) <= 2.0);
    CHECK(std::abs(rec->size.width_m - 24.0) <= 2.0);
  }
}

TEST_CASE("size recovery closure over 100 speckled slices") {
  int good = 0;
  for (int i = 0; i < 100; ++i) {
    Rng rng = derive_rng(77, static_cast<std::uint64_t>(i), 1);
    ClassSpec spec{"c", uniform(rng, 20, 60), 0.0, i % 2 ? 4 : 2, 0.9, 0.1745};
    spec.wingspan_m = std::min(58.0, spec.length_m * uniform(rng, 0.7, 1.05));
    const Slice s = gen_slice(spec, SynthOptions{}, rng);
    const auto rec = extract_size(s.image, "c");
    if (rec && std::abs(rec->size.length_m / spec.length_m - 1) <= 0.1 &&
        std::abs(rec->size.width_m / spec.wingspan_m - 1) <= 0.1)
      ++good;
  }
  CHECK(good >= 90);
}

TEST_CASE("normalize_size") {
  auto [a, b] = normalize_size(50, 50, {0, 100});
  CHECK(a == 0.0);
  CHECK(b == 0.0);
  std::tie(a, b) = normalize_size(1e-300, 10, {0, 100});
  CHECK(a == doctest::Approx(-1.0));
  std::tie(a, b) = normalize_size(75, 25, {0, 100});
  CHECK(a == 0.5);
  CHECK(b == -0.5);
  std::tie(a, b) = normalize_size(250, 5, {10, 75});
  CHECK(a == 1.0);
  CHECK(b == -1.0);
  double prev = -2.0;
  for (double v = 1; v < 120; v += 1.5) {
    const double x = normalize_size(v, 1, {0, 100}).first;
    CHECK(x >= prev);
    prev = x;
  }
  CHECK_THROWS_AS(normalize_size(0, 5, {0, 100}), ArgumentError);
  CHECK_THROWS_AS(normalize_size(5, -1, {0, 100}), ArgumentError);
  CHECK_THROWS_AS(normalize_size(5, 5, {100, 0}), ArgumentError);
}

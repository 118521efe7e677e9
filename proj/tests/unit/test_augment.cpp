#include <doctest.h>

#include "atriaqc/augment.hpp"
#include "test_util.hpp"

using namespace atriaqc;

namespace {

AugmentConfig flip_only(double p) {
  AugmentConfig c;
  c.p = p;
  c.transforms = {Transform::RandomFlip};
  c.image_size = 32;
  return c;
}

double max_abs(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().max().item<double>(); }

}  // namespace

TEST_CASE("normalization conventions") {
  const auto constant = torch::full({16, 16}, 3.5);
  CHECK(normalize_slice(constant).abs().max().item<double>() == 0.0);

  const auto x = torch::rand({32, 32}) * 4 + 2;
  const auto n = normalize_slice(x);
  CHECK(std::abs(n.mean().item<double>()) < 1e-5);
  CHECK(std::abs(n.std(false).item<double>() - 1.0) < 1e-4);

  CHECK(torch::equal(resize_slice(x, 32), x));
  CHECK(max_abs(preprocess(x, 32), normalize_slice(x)) == 0.0);

  const auto big = torch::rand({48, 40});
  const auto once = preprocess(big, 32);
  CHECK(once.sizes() == torch::IntArrayRef({32, 32}));
  CHECK(max_abs(preprocess(once, 32), once) <= 1e-5);

  AugmentConfig fixed;
  fixed.normalization = Normalization::Fixed;
  fixed.fixed_mean = 2.0;
  fixed.fixed_std = 4.0;
  CHECK(max_abs(normalize_slice(x, fixed), (x - 2.0) / 4.0) <= 1e-6);
}

TEST_CASE("p = 0 leaves slice and mask untouched") {
  AugmentConfig c;
  c.p = 0.0;
  c.image_size = 32;
  const auto x = torch::rand({32, 32});
  const auto m = (torch::rand({32, 32}) > 0.5).to(torch::kFloat);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto out = augment(x, m, c, rng);
    CHECK(torch::equal(out.image, x));
    CHECK(torch::equal(*out.mask, m));
  }
  const auto [v1, v2] = two_views(x, c, rng);
  CHECK(torch::equal(v1, v2));
  CHECK(max_abs(v1, preprocess(x, 32)) == 0.0);
}

TEST_CASE("flip with p = 1 is a horizontal involution") {
  const auto c = flip_only(1.0);
  const auto x = torch::rand({32, 32});
  std::mt19937_64 rng(2);
  const auto once = augment(x, std::nullopt, c, rng).image;
  CHECK(torch::equal(once, x.flip({1})));
  CHECK(torch::equal(augment(once, std::nullopt, c, rng).image, x));
  CHECK(torch::equal(apply_transform(apply_transform(x, flip_transform(), Interp::Bilinear), flip_transform(),
                                     Interp::Bilinear),
                     x));
}

TEST_CASE("integer shift moves the centroid") {
  auto x = torch::zeros({32, 32});
  x.index_put_({torch::indexing::Slice(10, 14), torch::indexing::Slice(8, 12)}, 1.0);
  const auto shifted = apply_transform(x, shift_transform(3, -2), Interp::Nearest);
  CHECK(torch::equal(shifted.index({torch::indexing::Slice(8, 12), torch::indexing::Slice(11, 15)}),
                     torch::ones({4, 4})));
  CHECK(shifted.sum().item<double>() == 16.0);
  const auto moved = shift_transform(3, -2).map_point(5, 5, 32);
  CHECK(moved[0] == doctest::Approx(8));
  CHECK(moved[1] == doctest::Approx(3));
}

TEST_CASE("mask and image receive the same spatial map") {
  AugmentConfig c;
  c.p = 1.0;
  c.image_size = 48;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto indicator = torch::zeros({48, 48});
    indicator.index_put_({torch::indexing::Slice(14, 30), torch::indexing::Slice(18, 34)}, 1.0);
    const auto out = augment(indicator, indicator, c, rng);
    const auto image_bin = (out.image > 0.5).to(torch::kFloat);
    // Bilinear and nearest resampling only disagree along the border.
    const double disagreement = (image_bin - *out.mask).abs().sum().item<double>();
    const double area = out.mask->sum().item<double>();
    REQUIRE(area > 0);
    CHECK(disagreement <= 0.35 * area);
    const auto again = apply_transform(indicator, out.transform, Interp::Nearest);
    CHECK(torch::equal(again, *out.mask));
  }
}

TEST_CASE("sampled transforms respect magnitude limits") {
  AugmentConfig c;
  c.p = 1.0;
  c.transforms = {Transform::Shift};
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto t = sample_transform(c, 100, 100, rng);
    const auto p = t.map_point(50, 50, 100);
    CHECK(std::abs(p[0] - 50) <= 10.0 + 1e-9);
    CHECK(std::abs(p[1] - 50) <= 10.0 + 1e-9);
  }
  c.transforms = {Transform::Rotate, Transform::Scale};
  for (int i = 0; i < 50; ++i) {
    const auto t = sample_transform(c, 100, 100, rng);
    const auto origin = t.map_point(49.5, 49.5, 100);
    const auto p = t.map_point(59.5, 49.5, 100);
    const double r = std::hypot(p[0] - origin[0], p[1] - origin[1]);
    CHECK(r >= 9.0 - 1e-9);
    CHECK(r <= 11.0 + 1e-9);
    const double angle = std::atan2(p[1] - origin[1], p[0] - origin[0]) * 180.0 / M_PI;
    CHECK(std::abs(angle) <= 15.0 + 1e-9);
  }
}

TEST_CASE("two_views is reproducible from the rng state") {
  AugmentConfig c;
  c.image_size = 32;
  const auto x = torch::rand({40, 40});
  auto r1 = item_rng(9, 2, 5);
  auto r2 = item_rng(9, 2, 5);
  const auto a = two_views(x, c, r1);
  const auto b = two_views(x, c, r2);
  CHECK(torch::equal(a.first, b.first));
  CHECK(torch::equal(a.second, b.second));
  CHECK(a.first.sizes() == torch::IntArrayRef({32, 32}));

  auto r3 = item_rng(9, 2, 6);
  CHECK(r3() != item_rng(9, 2, 5)());
}

TEST_CASE("augment config validation") {
  AugmentConfig c;
  CHECK_NOTHROW(c.validate());
  c.p = 1.5;
  CHECK_ERROR_KIND(c.validate(), ErrorKind::Config);
  CHECK(transform_from_name(transform_name(Transform::Perspective)) == Transform::Perspective);
}

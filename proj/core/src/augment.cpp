#include "atriaqc/augment.hpp"

#include <cmath>
#include <numbers>

#include "atriaqc/error.hpp"

namespace atriaqc {

namespace F = torch::nn::functional;

namespace {

using Mat3 = std::array<double, 9>;

constexpr Mat3 kIdentity = {1, 0, 0, 0, 1, 0, 0, 0, 1};

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

Mat3 inverse(const Mat3& m) {
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  require(std::abs(det) > 1e-12, ErrorKind::Numeric, "singular augmentation transform");
  const double inv = 1.0 / det;
  return {(m[4] * m[8] - m[5] * m[7]) * inv, (m[2] * m[7] - m[1] * m[8]) * inv,
          (m[1] * m[5] - m[2] * m[4]) * inv, (m[5] * m[6] - m[3] * m[8]) * inv,
          (m[0] * m[8] - m[2] * m[6]) * inv, (m[2] * m[3] - m[0] * m[5]) * inv,
          (m[3] * m[7] - m[4] * m[6]) * inv, (m[1] * m[6] - m[0] * m[7]) * inv,
          (m[0] * m[4] - m[1] * m[3]) * inv};
}

Mat3 translation(double dx, double dy) { return {1, 0, dx, 0, 1, dy, 0, 0, 1}; }

Mat3 about_center(const Mat3& m, double cx, double cy) {
  return matmul(translation(cx, cy), matmul(m, translation(-cx, -cy)));
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

// Homography taking the four `src` corners to `dst`.
Mat3 four_point_homography(const std::array<std::array<double, 2>, 4>& src,
                           const std::array<std::array<double, 2>, 4>& dst) {
  auto a = torch::zeros({8, 8}, torch::kDouble);
  auto b = torch::zeros({8}, torch::kDouble);
  auto A = a.accessor<double, 2>();
  auto B = b.accessor<double, 1>();
  for (int i = 0; i < 4; ++i) {
    const double x = src[i][0], y = src[i][1], u = dst[i][0], v = dst[i][1];
    const int r = 2 * i;
    A[r][0] = x; A[r][1] = y; A[r][2] = 1; A[r][6] = -u * x; A[r][7] = -u * y; B[r] = u;
    A[r + 1][3] = x; A[r + 1][4] = y; A[r + 1][5] = 1; A[r + 1][6] = -v * x; A[r + 1][7] = -v * y;
    B[r + 1] = v;
  }
  const auto h = torch::linalg_solve(a, b);
  auto H = h.accessor<double, 1>();
  return {H[0], H[1], H[2], H[3], H[4], H[5], H[6], H[7], 1.0};
}

torch::Tensor as_4d(const torch::Tensor& t) {
  require(t.dim() == 2, ErrorKind::Shape, "expected a 2D (H, W) slice");
  return t.to(torch::kFloat).unsqueeze(0).unsqueeze(0);
}

}  // namespace

std::string_view transform_name(Transform t) {
  switch (t) {
    case Transform::RandomFlip: return "random_flip";
    case Transform::Perspective: return "perspective";
    case Transform::Shift: return "shift";
    case Transform::Scale: return "scale";
    case Transform::Rotate: return "rotate";
  }
  return "?";
}

Transform transform_from_name(std::string_view name) {
  for (Transform t : {Transform::RandomFlip, Transform::Perspective, Transform::Shift,
                      Transform::Scale, Transform::Rotate}) {
    if (transform_name(t) == name) return t;
  }
  fail(ErrorKind::Config, "unknown transform '" + std::string(name) + "'");
}

void AugmentConfig::validate() const {
  require(p >= 0 && p <= 1, ErrorKind::Config, "augment p must lie in [0,1]");
  require(shift_limit > 0 && scale_limit > 0 && rotate_limit_deg > 0 && perspective_limit > 0,
          ErrorKind::Config, "augment limits must be positive");
  require(scale_limit < 1, ErrorKind::Config, "scale_limit must be < 1");
  require(image_size >= 8, ErrorKind::Config, "image_size must be >= 8");
  require(fixed_std > 0, ErrorKind::Config, "fixed_std must be > 0");
}

torch::Tensor resize_slice(const torch::Tensor& slice, int target) {
  require(target > 0, ErrorKind::Config, "resize target must be positive");
  if (slice.size(0) == target && slice.size(1) == target) return slice.to(torch::kFloat).clone();
  return F::interpolate(as_4d(slice), F::InterpolateFuncOptions()
                                          .size(std::vector<std::int64_t>{target, target})
                                          .mode(torch::kBilinear)
                                          .align_corners(false))
      .squeeze(0)
      .squeeze(0);
}

torch::Tensor resize_mask(const torch::Tensor& mask, int target) {
  if (mask.size(0) == target && mask.size(1) == target) return mask.to(torch::kFloat).clone();
  return F::interpolate(as_4d(mask), F::InterpolateFuncOptions()
                                         .size(std::vector<std::int64_t>{target, target})
                                         .mode(torch::kNearest))
      .squeeze(0)
      .squeeze(0);
}

torch::Tensor normalize_slice(const torch::Tensor& slice) {
  const auto x = slice.to(torch::kDouble);
  const double mean = x.mean().item<double>();
  const double sd = x.std(/*unbiased=*/false).item<double>();
  if (!(sd > 1e-6 * std::max(1.0, std::abs(mean)))) return torch::zeros_like(slice, torch::kFloat);
  return ((x - mean) / sd).to(torch::kFloat);
}

torch::Tensor normalize_slice(const torch::Tensor& slice, const AugmentConfig& config) {
  if (config.normalization == Normalization::PerSlice) return normalize_slice(slice);
  return ((slice.to(torch::kDouble) - config.fixed_mean) / config.fixed_std).to(torch::kFloat);
}

torch::Tensor preprocess(const torch::Tensor& slice, int target) {
  return normalize_slice(resize_slice(slice, target));
}

torch::Tensor preprocess(const torch::Tensor& slice, const AugmentConfig& config) {
  return normalize_slice(resize_slice(slice, config.image_size), config);
}

std::array<double, 2> SampledTransform::map_point(double x, double y, std::int64_t width) const {
  if (flip) x = double(width - 1) - x;
  const auto& m = homography;
  const double w = m[6] * x + m[7] * y + m[8];
  return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
}

SampledTransform shift_transform(double dx, double dy) {
  SampledTransform t;
  t.homography = translation(dx, dy);
  t.warps = true;
  return t;
}

SampledTransform flip_transform() {
  SampledTransform t;
  t.flip = true;
  return t;
}

SampledTransform sample_transform(const AugmentConfig& config, std::int64_t height,
                                  std::int64_t width, std::mt19937_64& rng) {
  SampledTransform t;
  const double cx = 0.5 * double(width - 1), cy = 0.5 * double(height - 1);
  Mat3 perspective = kIdentity, scale = kIdentity, rotate = kIdentity, shift = kIdentity;
  for (Transform kind : config.transforms) {
    // One Bernoulli draw per configured transform, always consumed so the
    // stream layout does not depend on p.
    const bool apply = unit(rng) < config.p;
    switch (kind) {
      case Transform::RandomFlip:
        if (apply) t.flip = true;
        break;
      case Transform::Perspective: {
        std::array<std::array<double, 2>, 4> src = {
            {{0, 0}, {double(width - 1), 0}, {double(width - 1), double(height - 1)}, {0, double(height - 1)}}};
        auto dst = src;
        for (auto& corner : dst) {
          corner[0] += uniform(rng, -1, 1) * config.perspective_limit * double(width);
          corner[1] += uniform(rng, -1, 1) * config.perspective_limit * double(height);
        }
        if (apply) {
          perspective = four_point_homography(src, dst);
          t.warps = true;
        }
        break;
      }
      case Transform::Shift: {
        const double dx = uniform(rng, -1, 1) * config.shift_limit * double(width);
        const double dy = uniform(rng, -1, 1) * config.shift_limit * double(height);
        if (apply) {
          shift = translation(dx, dy);
          t.warps = true;
        }
        break;
      }
      case Transform::Scale: {
        const double s = uniform(rng, 1 - config.scale_limit, 1 + config.scale_limit);
        if (apply) {
          scale = about_center({s, 0, 0, 0, s, 0, 0, 0, 1}, cx, cy);
          t.warps = true;
        }
        break;
      }
      case Transform::Rotate: {
        const double deg = uniform(rng, -1, 1) * config.rotate_limit_deg;
        const double th = deg * std::numbers::pi / 180.0;
        if (apply) {
          rotate = about_center({std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0, 0, 0, 1},
                                cx, cy);
          t.warps = true;
        }
        break;
      }
    }
  }
  t.homography = matmul(shift, matmul(rotate, matmul(scale, perspective)));
  return t;
}

torch::Tensor apply_transform(const torch::Tensor& image, const SampledTransform& t, Interp interp) {
  require(image.dim() == 2, ErrorKind::Shape, "apply_transform expects a 2D slice");
  torch::Tensor out = image.to(torch::kFloat);
  if (t.flip) out = torch::flip(out, {1});
  if (!t.warps) return out.clone();

  const std::int64_t h = out.size(0), w = out.size(1);
  const Mat3 inv = inverse(t.homography);
  auto grid = torch::empty({1, h, w, 2}, torch::kFloat);
  auto g = grid.accessor<float, 4>();
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double px = double(x), py = double(y);
      const double den = inv[6] * px + inv[7] * py + inv[8];
      const double sx = (inv[0] * px + inv[1] * py + inv[2]) / den;
      const double sy = (inv[3] * px + inv[4] * py + inv[5]) / den;
      g[0][y][x][0] = static_cast<float>((2.0 * sx + 1.0) / double(w) - 1.0);
      g[0][y][x][1] = static_cast<float>((2.0 * sy + 1.0) / double(h) - 1.0);
    }
  }
  auto options = F::GridSampleFuncOptions().padding_mode(torch::kZeros).align_corners(false);
  if (interp == Interp::Bilinear) {
    options.mode(torch::kBilinear);
  } else {
    options.mode(torch::kNearest);
  }
  return F::grid_sample(as_4d(out), grid, options)
      .squeeze(0)
      .squeeze(0);
}

Augmented augment(const torch::Tensor& slice, const std::optional<torch::Tensor>& mask,
                  const AugmentConfig& config, std::mt19937_64& rng) {
  config.validate();
  if (mask) {
    require(mask->sizes() == slice.sizes(), ErrorKind::Shape, "augment: mask and slice differ in shape");
  }
  Augmented out;
  out.transform = sample_transform(config, slice.size(0), slice.size(1), rng);
  out.image = apply_transform(slice, out.transform, Interp::Bilinear);
  if (mask) out.mask = apply_transform(*mask, out.transform, Interp::Nearest);
  return out;
}

std::pair<torch::Tensor, torch::Tensor> two_views(const torch::Tensor& slice,
                                                  const AugmentConfig& config,
                                                  std::mt19937_64& rng) {
  const auto resized = resize_slice(slice, config.image_size);
  auto first = augment(resized, std::nullopt, config, rng);
  auto second = augment(resized, std::nullopt, config, rng);
  return {normalize_slice(first.image, config), normalize_slice(second.image, config)};
}

std::mt19937_64 item_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t item) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(item),
                    static_cast<std::uint32_t>(item >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace atriaqc

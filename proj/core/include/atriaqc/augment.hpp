#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace atriaqc {

enum class Transform { RandomFlip, Perspective, Shift, Scale, Rotate };

std::string_view transform_name(Transform t);
Transform transform_from_name(std::string_view name);

enum class Normalization { PerSlice, Fixed };

struct AugmentConfig {
  double p = 0.5;
  std::vector<Transform> transforms = {Transform::RandomFlip, Transform::Perspective,
                                       Transform::Shift, Transform::Scale, Transform::Rotate};
  double shift_limit = 0.10;        // fraction of the side length
  double scale_limit = 0.10;        // scale drawn from [1 - limit, 1 + limit]
  double rotate_limit_deg = 15.0;
  double perspective_limit = 0.05;  // corner displacement, fraction of side
  int image_size = 128;
  Normalization normalization = Normalization::PerSlice;
  double fixed_mean = 0.0;  // used with Normalization::Fixed
  double fixed_std = 1.0;

  void validate() const;
};

/// Bilinear resize of a 2D (H, W) slice to (target, target); identity when
/// the slice already has that size.
torch::Tensor resize_slice(const torch::Tensor& slice, int target);
/// Nearest-neighbour resize for binary masks.
torch::Tensor resize_mask(const torch::Tensor& mask, int target);

/// Per-slice z-score; a constant slice maps to zeros.
torch::Tensor normalize_slice(const torch::Tensor& slice);
torch::Tensor normalize_slice(const torch::Tensor& slice, const AugmentConfig& config);

/// Resize to (target, target) then normalize.
torch::Tensor preprocess(const torch::Tensor& slice, int target);
torch::Tensor preprocess(const torch::Tensor& slice, const AugmentConfig& config);

/// A sampled geometric transform: optional horizontal flip followed by a
/// projective map in pixel coordinates (x = column, y = row).
struct SampledTransform {
  bool flip = false;
  std::array<double, 9> homography = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major forward map
  bool warps = false;  // false when the homography is the identity

  /// Where the pixel (x, y) of the input lands in the output.
  std::array<double, 2> map_point(double x, double y, std::int64_t width) const;
};

SampledTransform sample_transform(const AugmentConfig& config, std::int64_t height,
                                  std::int64_t width, std::mt19937_64& rng);

enum class Interp { Bilinear, Nearest };

/// Applies a transform to a 2D (H, W) tensor. Out-of-image samples are 0.
torch::Tensor apply_transform(const torch::Tensor& image, const SampledTransform& t, Interp interp);

/// Pure helpers for tests and composition.
SampledTransform shift_transform(double dx, double dy);
SampledTransform flip_transform();

struct Augmented {
  torch::Tensor image;
  std::optional<torch::Tensor> mask;
  SampledTransform transform;
};

/// Training-time geometric augmentation. Each configured transform is drawn
/// independently with probability p; the same spatial map is applied to the
/// mask (nearest) and the image (bilinear).
Augmented augment(const torch::Tensor& slice, const std::optional<torch::Tensor>& mask,
                  const AugmentConfig& config, std::mt19937_64& rng);

/// Two independent augment() draws of the same slice, each resized and
/// normalized to the configured image size.
std::pair<torch::Tensor, torch::Tensor> two_views(const torch::Tensor& slice,
                                                  const AugmentConfig& config,
                                                  std::mt19937_64& rng);

/// RNG stream for one item of one epoch.
std::mt19937_64 item_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t item);

}  // namespace atriaqc

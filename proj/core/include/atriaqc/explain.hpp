#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "atriaqc/datamodel.hpp"
#include "atriaqc/qa_models.hpp"

namespace atriaqc {

struct AttributionMap {
  torch::Tensor values;          // (h, w) double, final-conv resolution
  torch::Tensor upsampled_view;  // (S, S) double, bilinear upsample of values
  Attribute target = Attribute::FibrosisQuality;
  double logit = 0;              // target logit of the forward pass
};

/// Sum over channels of gradient times activation, for (C, h, w) or
/// (1, C, h, w) tensors. No ReLU.
torch::Tensor hirescam_channel_sum(const torch::Tensor& activations, const torch::Tensor& gradients);

/// Map in logit units: h * w * hirescam_channel_sum. With a global-average
/// pool and linear head the spatial mean of the map plus the bias equals the
/// logit.
torch::Tensor hirescam_values(const torch::Tensor& activations, const torch::Tensor& gradients);

/// HiResCAM of an arbitrary scalar head applied to activations (1, C, h, w).
AttributionMap hirescam(const std::function<torch::Tensor(const torch::Tensor&)>& head,
                        const torch::Tensor& activations, int upsample_size);

/// Encoder stage used as the attribution layer: 0 = stem, 1..4 = residual stages.
inline constexpr int kDefaultCamLayer = 4;

/// HiResCAM of one preprocessed (S, S) slice through a QA network, targeting
/// one output head's logit (default the QA logit).
AttributionMap hirescam(QANet& net, const torch::Tensor& slice, Attribute target = Attribute::FibrosisQuality,
                        int layer = kDefaultCamLayer);

/// Parses a head name ("mn", "s", "eat", "qa"); throws Config if unknown.
Attribute cam_target_from_name(std::string_view name);

/// sum(|map| * mask) / sum(|map|). Shapes must match; throws Domain for an
/// all-zero map.
double attribution_mass_inside_mask(const torch::Tensor& map, const torch::Tensor& mask);

/// Writes an (H, W) tensor as an 8-bit grayscale PNG, min-max scaled.
void write_png_gray(const std::filesystem::path& file, const torch::Tensor& image);

enum class EmbeddingLayer { Encoder, Projection };
EmbeddingLayer embedding_layer_from_name(std::string_view name);

/// Row per slice: pooled encoder features or L2-normalized projections.
torch::Tensor compute_embeddings(QANet& net, std::span<const SliceSample> slices, EmbeddingLayer layer,
                                 const AugmentConfig& augment, int batch_size = 64);

/// CSV with header `scan_id,slice,label_qa,e_0..e_{k-1}`. Returns rows written.
std::size_t export_embeddings(QANet& net, std::span<const SliceSample> slices, EmbeddingLayer layer,
                              const AugmentConfig& augment, const std::filesystem::path& csv);

struct CosineSeparation {
  double intra = 0;  // mean cosine over distinct same-label pairs
  double inter = 0;  // mean cosine over different-label pairs
};
CosineSeparation cosine_separation(const torch::Tensor& embeddings, std::span<const int> labels);

}  // namespace atriaqc

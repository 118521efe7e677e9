#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace atriaqc {

/// (conv3x3 -> BN -> ReLU) x 2.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(std::int64_t in_channels, std::int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ConvBlock);

/// U-Net style decoder: starting from the deepest feature map, repeatedly
/// upsample x2 (bilinear), concatenate the next shallower skip, and apply a
/// ConvBlock. `skip_channels` lists feature channels shallow -> deep; the
/// decoder has skip_channels.size() - 1 up steps, and level i uses
/// base_width * 2^i channels. `final_upsample` rescales the output map (used
/// when the shallowest skip is below input resolution).
class UNetDecoderImpl : public torch::nn::Module {
 public:
  UNetDecoderImpl(std::vector<std::int64_t> skip_channels, std::int64_t base_width,
                  std::int64_t out_channels, std::int64_t final_upsample = 1);

  /// `features` ordered shallow -> deep, matching skip_channels. Returns logits.
  torch::Tensor forward(const std::vector<torch::Tensor>& features);

 private:
  std::vector<ConvBlock> blocks_;  // blocks_[i] produces decoder level i
  torch::nn::Conv2d head_{nullptr};
  std::int64_t final_upsample_;
};
TORCH_MODULE(UNetDecoder);

/// 2D U-Net: `depth` downsamplings, level i has base_width * 2^i channels.
/// Inputs whose side is not a multiple of 2^depth are zero-padded and the
/// output is cropped back.
class UNetImpl : public torch::nn::Module {
 public:
  UNetImpl(std::int64_t in_channels, std::int64_t base_width, int depth);
  torch::Tensor forward(const torch::Tensor& x);  // (B, C, H, W) -> logits (B, 1, H, W)
  int depth() const { return depth_; }

 private:
  std::vector<ConvBlock> encoder_;
  UNetDecoder decoder_{nullptr};
  int depth_;
};
TORCH_MODULE(UNet);

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(std::int64_t in_channels, std::int64_t out_channels, std::int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(BasicBlock);

struct EncoderFeatures {
  torch::Tensor stem;                  // 1/2 resolution
  std::array<torch::Tensor, 4> stages; // 1/4, 1/8, 1/16, 1/32
  torch::Tensor pooled;                // (B, 8 * base_width)
};

/// ResNet-34 style residual encoder (7x7 stem, max-pool, four stages of
/// basic blocks). Stage widths are base_width * {1, 2, 4, 8}.
class ResidualEncoderImpl : public torch::nn::Module {
 public:
  ResidualEncoderImpl(std::int64_t in_channels, std::int64_t base_width,
                      std::array<int, 4> blocks);
  EncoderFeatures forward(const torch::Tensor& x);

  std::int64_t in_channels() const { return in_channels_; }
  std::int64_t feature_dim() const { return 8 * base_width_; }
  std::vector<std::int64_t> skip_channels() const;  // stem then stages

 private:
  torch::nn::Sequential stem_{nullptr};
  torch::nn::MaxPool2d pool_{nullptr};
  std::array<torch::nn::Sequential, 4> stages_{nullptr, nullptr, nullptr, nullptr};
  std::int64_t in_channels_;
  std::int64_t base_width_;
};
TORCH_MODULE(ResidualEncoder);

}  // namespace atriaqc

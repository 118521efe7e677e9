#include "atriaqc/nets.hpp"

#include "atriaqc/error.hpp"

namespace atriaqc {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

torch::Tensor upsample_to(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

ConvBlockImpl::ConvBlockImpl(std::int64_t in_channels, std::int64_t out_channels) {
  body_ = register_module(
      "body", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).padding(1).bias(false)),
                             nn::BatchNorm2d(out_channels), nn::ReLU(nn::ReLUOptions(true)),
                             nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3).padding(1).bias(false)),
                             nn::BatchNorm2d(out_channels), nn::ReLU(nn::ReLUOptions(true))));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

UNetDecoderImpl::UNetDecoderImpl(std::vector<std::int64_t> skip_channels, std::int64_t base_width,
                                 std::int64_t out_channels, std::int64_t final_upsample)
    : final_upsample_(final_upsample) {
  require(skip_channels.size() >= 2, ErrorKind::Config, "decoder needs at least two feature levels");
  const auto levels = skip_channels.size() - 1;
  blocks_.resize(levels, nullptr);
  std::int64_t incoming = skip_channels.back();
  for (std::size_t step = 0; step < levels; ++step) {
    const std::size_t level = levels - 1 - step;
    const std::int64_t width = base_width << level;
    blocks_[level] = register_module("up" + std::to_string(level),
                                     ConvBlock(incoming + skip_channels[level], width));
    incoming = width;
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(incoming, out_channels, 1)));
}

torch::Tensor UNetDecoderImpl::forward(const std::vector<torch::Tensor>& features) {
  require(features.size() == blocks_.size() + 1, ErrorKind::Shape, "decoder feature count mismatch");
  torch::Tensor x = features.back();
  for (std::size_t step = 0; step < blocks_.size(); ++step) {
    const std::size_t level = blocks_.size() - 1 - step;
    const auto& skip = features[level];
    x = upsample_to(x, skip.size(2), skip.size(3));
    x = blocks_[level]->forward(torch::cat({x, skip}, 1));
  }
  x = head_->forward(x);
  if (final_upsample_ > 1) x = upsample_to(x, x.size(2) * final_upsample_, x.size(3) * final_upsample_);
  return x;
}

UNetImpl::UNetImpl(std::int64_t in_channels, std::int64_t base_width, int depth) : depth_(depth) {
  require(depth >= 1, ErrorKind::Config, "U-Net depth must be >= 1");
  require(base_width >= 1, ErrorKind::Config, "U-Net base width must be >= 1");
  std::vector<std::int64_t> channels;
  std::int64_t incoming = in_channels;
  for (int level = 0; level <= depth; ++level) {
    const std::int64_t width = base_width << level;
    encoder_.push_back(register_module("down" + std::to_string(level), ConvBlock(incoming, width)));
    channels.push_back(width);
    incoming = width;
  }
  decoder_ = register_module("decoder", UNetDecoder(channels, base_width, 1));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& input) {
  require(input.dim() == 4, ErrorKind::Shape, "U-Net expects (B, C, H, W)");
  const std::int64_t multiple = std::int64_t{1} << depth_;
  const std::int64_t h = input.size(2), w = input.size(3);
  const std::int64_t pad_h = (multiple - h % multiple) % multiple;
  const std::int64_t pad_w = (multiple - w % multiple) % multiple;
  torch::Tensor x = input;
  if (pad_h || pad_w) x = F::pad(x, F::PadFuncOptions({0, pad_w, 0, pad_h}));

  std::vector<torch::Tensor> features;
  for (std::size_t level = 0; level < encoder_.size(); ++level) {
    if (level > 0) x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
    x = encoder_[level]->forward(x);
    features.push_back(x);
  }
  auto logits = decoder_->forward(features);
  if (pad_h || pad_w) {
    logits = logits.index({torch::indexing::Slice(), torch::indexing::Slice(),
                           torch::indexing::Slice(0, h), torch::indexing::Slice(0, w)});
  }
  return logits;
}

BasicBlockImpl::BasicBlockImpl(std::int64_t in_channels, std::int64_t out_channels, std::int64_t stride) {
  conv1_ = register_module(
      "conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).stride(stride).padding(1).bias(false)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out_channels));
  conv2_ = register_module(
      "conv2", nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3).padding(1).bias(false)));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    downsample_ = register_module(
        "downsample",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)),
                       nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1_->forward(conv1_->forward(x)));
  out = bn2_->forward(conv2_->forward(out));
  const auto identity = downsample_ ? downsample_->forward(x) : x;
  return torch::relu(out + identity);
}

ResidualEncoderImpl::ResidualEncoderImpl(std::int64_t in_channels, std::int64_t base_width,
                                         std::array<int, 4> blocks)
    : in_channels_(in_channels), base_width_(base_width) {
  require(base_width >= 1, ErrorKind::Config, "encoder base width must be >= 1");
  stem_ = register_module(
      "stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, base_width, 7).stride(2).padding(3).bias(false)),
                             nn::BatchNorm2d(base_width), nn::ReLU(nn::ReLUOptions(true))));
  pool_ = register_module("pool", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
  std::int64_t incoming = base_width;
  for (int s = 0; s < 4; ++s) {
    require(blocks[s] >= 1, ErrorKind::Config, "each encoder stage needs at least one block");
    const std::int64_t width = base_width << s;
    nn::Sequential stage;
    for (int b = 0; b < blocks[s]; ++b) {
      const std::int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      stage->push_back(BasicBlock(b == 0 ? incoming : width, width, stride));
    }
    stages_[s] = register_module("layer" + std::to_string(s + 1), stage);
    incoming = width;
  }
}

EncoderFeatures ResidualEncoderImpl::forward(const torch::Tensor& x) {
  EncoderFeatures f;
  f.stem = stem_->forward(x);
  torch::Tensor h = pool_->forward(f.stem);
  for (int s = 0; s < 4; ++s) {
    h = stages_[s]->forward(h);
    f.stages[s] = h;
  }
  f.pooled = h.mean({2, 3});
  return f;
}

std::vector<std::int64_t> ResidualEncoderImpl::skip_channels() const {
  return {base_width_, base_width_, 2 * base_width_, 4 * base_width_, 8 * base_width_};
}

}  // namespace atriaqc

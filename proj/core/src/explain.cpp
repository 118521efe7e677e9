#include "atriaqc/explain.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <png.h>

#include "atriaqc/error.hpp"

namespace atriaqc {

namespace F = torch::nn::functional;

torch::Tensor hirescam_channel_sum(const torch::Tensor& activations, const torch::Tensor& gradients) {
  require(activations.sizes() == gradients.sizes(), ErrorKind::Shape, "activation/gradient shape mismatch");
  require(activations.dim() == 3 || (activations.dim() == 4 && activations.size(0) == 1), ErrorKind::Shape,
          "HiResCAM expects (C, h, w) or (1, C, h, w) activations");
  const auto a = activations.dim() == 4 ? activations[0] : activations;
  const auto g = gradients.dim() == 4 ? gradients[0] : gradients;
  return (g.to(torch::kDouble) * a.to(torch::kDouble)).sum(0);
}

torch::Tensor hirescam_values(const torch::Tensor& activations, const torch::Tensor& gradients) {
  const auto sum = hirescam_channel_sum(activations, gradients);
  return sum * double(sum.size(0) * sum.size(1));
}

namespace {

torch::Tensor upsample_view(const torch::Tensor& values, int size) {
  return F::interpolate(values.unsqueeze(0).unsqueeze(0),
                        F::InterpolateFuncOptions()
                            .size(std::vector<std::int64_t>{size, size})
                            .mode(torch::kBilinear)
                            .align_corners(false))
      .squeeze(0)
      .squeeze(0);
}

std::size_t head_index(Attribute a) {
  for (std::size_t i = 0; i < kAllAttributes.size(); ++i) {
    if (kAllAttributes[i] == a) return i;
  }
  fail(ErrorKind::Config, "unknown attribution target");
}

}  // namespace

AttributionMap hirescam(const std::function<torch::Tensor(const torch::Tensor&)>& head,
                        const torch::Tensor& activations, int upsample_size) {
  torch::AutoGradMode grad_mode(true);
  const auto a = activations.detach().clone().requires_grad_(true);
  const auto y = head(a);
  require(y.numel() == 1, ErrorKind::Shape, "HiResCAM head must return a scalar");
  const auto grads = torch::autograd::grad({y.sum()}, {a}, {}, false, false, true);
  const auto g = grads[0].defined() ? grads[0] : torch::zeros_like(a);
  AttributionMap map;
  map.values = hirescam_values(a.detach(), g);
  map.upsampled_view = upsample_view(map.values, upsample_size);
  map.logit = y.item<double>();
  return map;
}

AttributionMap hirescam(QANet& net, const torch::Tensor& slice, Attribute target, int layer) {
  require(layer >= 0 && layer <= 4, ErrorKind::Config, "CAM layer must be 0 (stem) .. 4 (last stage)");
  require(slice.dim() == 2, ErrorKind::Shape, "hirescam expects one (S, S) slice");
  const auto index = static_cast<std::int64_t>(head_index(target));
  torch::AutoGradMode grad_mode(true);
  net->eval();
  const auto x = slice.unsqueeze(0).unsqueeze(0).detach().clone().requires_grad_(true);
  const auto out = net->forward(x);
  const auto& a = layer == 0 ? out.features.stem : out.features.stages[static_cast<std::size_t>(layer - 1)];
  const auto y = out.logits.select(1, index).sum();
  const auto grads = torch::autograd::grad({y}, {a}, {}, false, false, true);
  const auto g = grads[0].defined() ? grads[0] : torch::zeros_like(a);
  AttributionMap map;
  map.target = target;
  map.values = hirescam_values(a.detach(), g);
  map.upsampled_view = upsample_view(map.values, static_cast<int>(slice.size(0)));
  map.logit = y.item<double>();
  return map;
}

Attribute cam_target_from_name(std::string_view name) {
  for (Attribute a : kAllAttributes) {
    if (attribute_key(a) == name) return a;
  }
  fail(ErrorKind::Config, "unknown CAM target head '" + std::string(name) + "' (expected mn, s, eat or qa)");
}

double attribution_mass_inside_mask(const torch::Tensor& map, const torch::Tensor& mask) {
  require(map.sizes() == mask.sizes(), ErrorKind::Shape, "map and mask must have the same shape");
  const auto magnitude = map.to(torch::kDouble).abs();
  const double total = magnitude.sum().item<double>();
  require(total > 0, ErrorKind::Domain, "attribution mass undefined for an all-zero map");
  const double inside = (magnitude * (mask.to(torch::kDouble) > 0.5).to(torch::kDouble)).sum().item<double>();
  return inside / total;
}

void write_png_gray(const std::filesystem::path& file, const torch::Tensor& image) {
  require(image.dim() == 2, ErrorKind::Shape, "PNG export expects an (H, W) tensor");
  const auto img = image.to(torch::kDouble).contiguous();
  const double lo = img.min().item<double>();
  const double hi = img.max().item<double>();
  const auto height = static_cast<png_uint_32>(img.size(0));
  const auto width = static_cast<png_uint_32>(img.size(1));
  const auto acc = img.accessor<double, 2>();
  std::vector<png_byte> pixels(std::size_t(height) * width);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      const double v = hi > lo ? (acc[y][x] - lo) / (hi - lo) : 0.0;
      pixels[std::size_t(y) * width + x] = static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(file.string().c_str(), "wb"), &std::fclose);
  require(fp != nullptr, ErrorKind::Io, "cannot open " + file.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "libpng failed writing " + file.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 y = 0; y < height; ++y) png_write_row(png, &pixels[std::size_t(y) * width]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

EmbeddingLayer embedding_layer_from_name(std::string_view name) {
  if (name == "encoder") return EmbeddingLayer::Encoder;
  if (name == "projection") return EmbeddingLayer::Projection;
  fail(ErrorKind::Config, "unknown embedding layer '" + std::string(name) + "' (expected encoder or projection)");
}

torch::Tensor compute_embeddings(QANet& net, std::span<const SliceSample> slices, EmbeddingLayer layer,
                                 const AugmentConfig& augment, int batch_size) {
  require(!slices.empty(), ErrorKind::Data, "no slices to embed");
  if (layer == EmbeddingLayer::Projection) {
    require(net->has_projection(), ErrorKind::Config, "model has no projection head");
  }
  torch::NoGradGuard no_grad;
  net->eval();
  std::vector<torch::Tensor> rows;
  const auto n = static_cast<std::int64_t>(slices.size());
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const auto end = std::min<std::int64_t>(n, start + batch_size);
    std::vector<torch::Tensor> xs;
    for (auto k = start; k < end; ++k) xs.push_back(normalize_slice(slices[std::size_t(k)].image, augment));
    const auto x = torch::stack(xs).unsqueeze(1);
    rows.push_back(layer == EmbeddingLayer::Projection ? net->project(x)
                                                       : net->encoder->forward(net->prepare_input(x)).pooled);
  }
  return torch::cat(rows, 0).to(torch::kDouble);
}

std::size_t export_embeddings(QANet& net, std::span<const SliceSample> slices, EmbeddingLayer layer,
                              const AugmentConfig& augment, const std::filesystem::path& csv) {
  const auto emb = compute_embeddings(net, slices, layer, augment).contiguous();
  const auto acc = emb.accessor<double, 2>();
  std::ofstream out(csv, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + csv.string() + " for writing");
  out << "scan_id,slice,label_qa";
  for (std::int64_t j = 0; j < emb.size(1); ++j) out << ",e_" << j;
  out << '\n';
  for (std::size_t i = 0; i < slices.size(); ++i) {
    std::string row = fmt::format("{},{},{}", slices[i].scan_id, slices[i].slice, int(slices[i].labels[3]));
    for (std::int64_t j = 0; j < emb.size(1); ++j) row += fmt::format(",{}", acc[std::int64_t(i)][j]);
    out << row << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + csv.string());
  return slices.size();
}

CosineSeparation cosine_separation(const torch::Tensor& embeddings, std::span<const int> labels) {
  require(embeddings.dim() == 2 && embeddings.size(0) == static_cast<std::int64_t>(labels.size()), ErrorKind::Shape,
          "one label per embedding row is required");
  const auto z = F::normalize(embeddings.to(torch::kDouble), F::NormalizeFuncOptions().p(2).dim(1).eps(1e-12));
  const auto sim = torch::mm(z, z.t()).contiguous();
  const auto acc = sim.accessor<double, 2>();
  double intra = 0, inter = 0;
  std::int64_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      const double s = acc[std::int64_t(i)][std::int64_t(j)];
      if (labels[i] == labels[j]) {
        intra += s;
        ++n_intra;
      } else {
        inter += s;
        ++n_inter;
      }
    }
  }
  require(n_intra > 0 && n_inter > 0, ErrorKind::Domain, "cosine separation needs both same- and cross-label pairs");
  return {intra / double(n_intra), inter / double(n_inter)};
}

}  // namespace atriaqc

#include <doctest.h>

#include <fstream>

#include "atriaqc/explain.hpp"
#include "test_util.hpp"

using namespace atriaqc;

namespace {

std::vector<oracle::Matrix> to_chw(const torch::Tensor& t) {
  const auto d = t.squeeze(0).to(torch::kDouble).contiguous();
  std::vector<oracle::Matrix> out;
  for (std::int64_t c = 0; c < d.size(0); ++c) out.push_back(testutil::to_matrix(d[c]));
  return out;
}

struct GapLinear {
  torch::Tensor weight;  // (C,)
  double bias;
  torch::Tensor operator()(const torch::Tensor& a) const { return (a.mean({2, 3}).squeeze(0) * weight).sum() + bias; }
};

}  // namespace

TEST_CASE("vectorized map equals the per-channel loop") {
  for (int trial = 0; trial < 20; ++trial) {
    const auto act = torch::randn({1, 5, 4, 6}, torch::kDouble);
    const auto grad = torch::randn({1, 5, 4, 6}, torch::kDouble);
    const auto got = testutil::to_matrix(hirescam_values(act, grad));
    const auto want = oracle::hirescam(to_chw(act), to_chw(grad));
    for (std::size_t y = 0; y < want.size(); ++y) {
      for (std::size_t x = 0; x < want[y].size(); ++x) CHECK(std::abs(got[y][x] - want[y][x]) <= 1e-6);
    }
    const auto raw = hirescam_channel_sum(act.squeeze(0), grad.squeeze(0));
    CHECK(torch::allclose(raw * 24.0, hirescam_values(act, grad)));
  }
}

TEST_CASE("gap plus linear head: map mean plus bias is the logit") {
  torch::manual_seed(4);
  for (int trial = 0; trial < 100; ++trial) {
    const GapLinear head{torch::randn({6}, torch::kDouble), 0.37};
    const auto act = torch::randn({1, 6, 3, 5}, torch::kDouble);
    const auto map = hirescam(head, act, 12);
    CHECK(map.values.sizes() == torch::IntArrayRef({3, 5}));
    CHECK(map.upsampled_view.sizes() == torch::IntArrayRef({12, 12}));
    CHECK(std::abs(map.values.mean().item<double>() + head.bias - map.logit) <= 1e-4);
    CHECK(std::abs(map.logit - head(act).item<double>()) <= 1e-12);

    const GapLinear doubled{head.weight * 2, head.bias};
    CHECK(torch::allclose(hirescam(doubled, act, 12).values, map.values * 2));
  }
}

TEST_CASE("zero activations give a zero map") {
  const GapLinear head{torch::ones({3}, torch::kDouble), 1.0};
  const auto map = hirescam(head, torch::zeros({1, 3, 4, 4}, torch::kDouble), 8);
  CHECK(map.values.abs().max().item<double>() == 0.0);
}

TEST_CASE("attribution mass inside mask") {
  auto mask = torch::zeros({4, 4});
  mask.index_put_({torch::indexing::Slice(0, 2)}, 1.0);
  CHECK(attribution_mass_inside_mask(torch::ones({4, 4}), mask) == doctest::Approx(0.5));
  CHECK(attribution_mass_inside_mask(mask * -3.0, mask) == doctest::Approx(1.0));
  CHECK_ERROR_KIND(attribution_mass_inside_mask(torch::zeros({4, 4}), mask), ErrorKind::Domain);
  CHECK_ERROR_KIND(attribution_mass_inside_mask(torch::ones({4, 3}), mask), ErrorKind::Shape);
}

TEST_CASE("hirescam through a qa network") {
  QANetConfig c;
  c.encoder_blocks = {1, 1, 1, 1};
  c.encoder_width = 4;
  c.image_size = 64;
  c.seed = 2;
  auto net = make_qa_net(c);
  net->eval();
  const auto x = torch::randn({64, 64});
  const double logit = net->forward(x.view({1, 1, 64, 64})).logits[0][3].item<double>();
  for (int layer = 0; layer <= 4; ++layer) {
    const auto map = hirescam(net, x, Attribute::FibrosisQuality, layer);
    CHECK(map.upsampled_view.sizes() == torch::IntArrayRef({64, 64}));
    CHECK(map.logit == doctest::Approx(logit).epsilon(1e-5));
  }
  CHECK(hirescam(net, x).values.sizes() == torch::IntArrayRef({2, 2}));
  CHECK_ERROR_KIND(hirescam(net, x, Attribute::FibrosisQuality, 5), ErrorKind::Config);
  CHECK(cam_target_from_name("eat") == Attribute::AortaValveEnhancement);
  CHECK_ERROR_KIND(cam_target_from_name("nope"), ErrorKind::Config);

  net->freeze_encoder();
  CHECK(hirescam(net, x).values.abs().sum().item<double>() > 0);
}

TEST_CASE("embedding export writes one row per slice") {
  QANetConfig c;
  c.strategy = Strategy::Contrastive;
  c.encoder_blocks = {1, 1, 1, 1};
  c.encoder_width = 4;
  c.proj_dim = 6;
  c.image_size = 32;
  auto net = make_qa_net(c);
  AugmentConfig aug;
  aug.image_size = 32;
  std::vector<SliceSample> slices(5);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    slices[i].image = torch::randn({32, 32});
    slices[i].labels = {0, 0, 0, float(i % 2)};
    slices[i].scan_id = "s" + std::to_string(i / 2);
    slices[i].slice = std::int64_t(i);
  }
  CHECK(compute_embeddings(net, slices, EmbeddingLayer::Encoder, aug).sizes() == torch::IntArrayRef({5, 32}));
  const auto proj = compute_embeddings(net, slices, EmbeddingLayer::Projection, aug, 2);
  CHECK(proj.sizes() == torch::IntArrayRef({5, 6}));

  testutil::TempDir tmp("embeddings");
  CHECK(export_embeddings(net, slices, EmbeddingLayer::Projection, aug, tmp / "e.csv") == 5);
  std::ifstream in(tmp / "e.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "scan_id,slice,label_qa,e_0,e_1,e_2,e_3,e_4,e_5");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 5);
  CHECK(embedding_layer_from_name("projection") == EmbeddingLayer::Projection);
}

TEST_CASE("cosine separation on crafted clusters") {
  const auto e = torch::tensor({{1.0, 0.0}, {0.9, 0.1}, {0.0, 1.0}, {0.1, 0.9}}, torch::kDouble);
  const std::vector<int> labels = {0, 0, 1, 1};
  const auto sep = cosine_separation(e, labels);
  CHECK(sep.intra > sep.inter);
  const double c01 = 0.9 / std::hypot(0.9, 0.1);
  CHECK(sep.intra == doctest::Approx(c01));
}

TEST_CASE("png writer emits a file") {
  testutil::TempDir tmp("png");
  write_png_gray(tmp / "a.png", torch::rand({9, 7}));
  CHECK(std::filesystem::file_size(tmp / "a.png") > 8);
  std::ifstream in(tmp / "a.png", std::ios::binary);
  char sig[4] = {};
  in.read(sig, 4);
  CHECK(sig[1] == 'P');
  CHECK(sig[2] == 'N');
}

#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "atriaqc/hashing.hpp"
#include "atriaqc/phantom.hpp"
#include "atriaqc/qa_models.hpp"
#include "test_util.hpp"

using namespace atriaqc;
namespace nn = torch::nn;

namespace {

QANetConfig tiny_qa(Strategy strategy) {
  QANetConfig c;
  c.strategy = strategy;
  c.encoder_blocks = {1, 1, 1, 1};
  c.encoder_width = 4;
  c.attr_hidden = 8;
  c.qa_hidden = 4;
  c.proj_dim = 8;
  c.decoder_width = 4;
  c.image_size = 32;
  c.batch_size = 4;
  c.epochs = 2;
  c.seed = 13;
  c.contrastive.epochs = 2;
  c.contrastive.batch_size = 4;
  return c;
}

AugmentConfig tiny_augment() {
  AugmentConfig a;
  a.image_size = 32;
  return a;
}

std::vector<ScanRecord> labeled_scans(int n, std::uint64_t seed) {
  PhantomConfig pc;
  pc.dims = {6, 32, 32};
  pc.n_scans = n;
  pc.seed = seed;
  std::vector<ScanRecord> scans;
  for (int i = 0; i < n; ++i) scans.push_back(generate_scan(pc, i));
  return scans;
}

SliceSelections band_selections(const std::vector<ScanRecord>& scans) {
  SliceSelections sel;
  for (const auto& s : scans) {
    for (std::int64_t d = 0; d < s.dims.depth; ++d) {
      const auto m = s.mask_slice(d);
      if (std::any_of(m.begin(), m.end(), [](auto v) { return v != 0; })) sel[s.scan_id].push_back(d);
    }
  }
  return sel;
}


}  // namespace

TEST_CASE("qa net output shapes and range") {
  for (auto strategy : {Strategy::Baseline, Strategy::MultiTask, Strategy::Contrastive}) {
    auto net = make_qa_net(tiny_qa(strategy));
    net->eval();
    for (std::int64_t b : {1, 3}) {
      const auto out = net->forward(torch::randn({b, 1, 32, 32}) * 5, net->has_decoder());
      CHECK(out.probs.sizes() == torch::IntArrayRef({b, 4}));
      CHECK(out.logits.sizes() == torch::IntArrayRef({b, 4}));
      CHECK((out.probs > 0).all().item<bool>());
      CHECK((out.probs < 1).all().item<bool>());
      if (net->has_decoder()) CHECK(out.mask_logits.sizes() == torch::IntArrayRef({b, 1, 32, 32}));
    }
    CHECK(net->has_decoder() == (strategy == Strategy::MultiTask));
    CHECK(net->has_projection() == (strategy == Strategy::Contrastive));
    CHECK_ERROR_KIND(net->forward(torch::randn({2, 2, 32, 32})), ErrorKind::Shape);
    CHECK_ERROR_KIND(net->forward(torch::randn({2, 1, 30, 32})), ErrorKind::Shape);
  }
}

TEST_CASE("qa head sees only attribute logits") {
  auto net = make_qa_net(tiny_qa(Strategy::Baseline));
  net->eval();
  auto last = net->qa_head->ptr<nn::LinearImpl>(2);
  {
    torch::NoGradGuard g;
    last->weight.zero_();
  }
  const double expected = torch::sigmoid(last->bias).item<double>();
  const auto probs = net->forward(torch::randn({5, 1, 32, 32})).probs;
  for (std::int64_t i = 0; i < 5; ++i) CHECK(probs[i][3].item<double>() == doctest::Approx(expected).epsilon(1e-7));
}

TEST_CASE("projections are unit norm") {
  auto net = make_qa_net(tiny_qa(Strategy::Contrastive));
  const auto z = net->project(torch::randn({6, 1, 32, 32}));
  CHECK(z.sizes() == torch::IntArrayRef({6, 8}));
  CHECK(((z.norm(2, 1) - 1).abs() < 1e-5).all().item<bool>());
}

TEST_CASE("detached decoder reduces multitask training to baseline training") {
  auto multi = make_qa_net(tiny_qa(Strategy::MultiTask));
  auto base = make_qa_net(tiny_qa(Strategy::Baseline));
  {
    torch::NoGradGuard g;
    auto mp = multi->named_parameters();
    for (auto& item : base->named_parameters()) item.value().copy_(mp[item.key()]);
    auto mb = multi->named_buffers();
    for (auto& item : base->named_buffers()) item.value().copy_(mb[item.key()]);
  }
  std::vector<torch::Tensor> shared_multi, shared_base;
  auto mp = multi->named_parameters();
  for (auto& item : base->named_parameters()) {
    shared_base.push_back(item.value());
    shared_multi.push_back(mp[item.key()]);
  }
  std::vector<torch::Tensor> decoder_params = multi->decoder->parameters();
  torch::optim::Adam opt_multi(shared_multi, torch::optim::AdamOptions(1e-3));
  torch::optim::Adam opt_dec(decoder_params, torch::optim::AdamOptions(1e-3));
  torch::optim::Adam opt_base(shared_base, torch::optim::AdamOptions(1e-3));
  multi->train();
  base->train();
  torch::manual_seed(99);
  for (int step = 0; step < 3; ++step) {
    const auto x = torch::randn({4, 1, 32, 32});
    const auto y = torch::randint(0, 2, {4, 4}).to(torch::kFloat);
    const auto m = torch::randint(0, 2, {4, 1, 32, 32}).to(torch::kFloat);

    opt_multi.zero_grad();
    opt_dec.zero_grad();
    const auto fm = multi->forward(x, true, true);
    const auto qa_m = qa_bce_loss(y, fm.probs);
    multitask_loss(qa_m, dice_loss(m, torch::sigmoid(fm.mask_logits))).backward();
    opt_multi.step();
    opt_dec.step();

    opt_base.zero_grad();
    const auto qa_b = qa_bce_loss(y, base->forward(x).probs);
    qa_b.backward();
    opt_base.step();

    CHECK(qa_m.item<double>() == qa_b.item<double>());
  }
  for (std::size_t i = 0; i < shared_base.size(); ++i) CHECK(torch::equal(shared_base[i], shared_multi[i]));
}

TEST_CASE("slice set construction") {
  const auto scans = labeled_scans(3, 4);
  auto sel = band_selections(scans);
  sel.erase(scans[1].scan_id);
  const auto slices = build_slice_set(scans, sel, 32, true);
  std::size_t expected = sel[scans[0].scan_id].size() + sel[scans[2].scan_id].size();
  CHECK(slices.size() == expected);
  for (const auto& s : slices) {
    CHECK(s.image.sizes() == torch::IntArrayRef({32, 32}));
    REQUIRE(s.mask.has_value());
    CHECK(s.scan_id != scans[1].scan_id);
  }

  auto unmasked = scans;
  unmasked[0].blood_pool_mask.reset();
  CHECK_ERROR_KIND(build_slice_set(unmasked, sel, 32, true), ErrorKind::Data);
  CHECK_NOTHROW(build_slice_set(unmasked, sel, 32, false));
}

TEST_CASE("validation mse of a saturated perfect predictor is zero") {
  const auto scans = labeled_scans(2, 4);
  auto slices = build_slice_set(scans, band_selections(scans), 32, false);
  for (auto& s : slices) s.labels = {1, 1, 1, 1};
  auto net = make_qa_net(tiny_qa(Strategy::Baseline));
  {
    torch::NoGradGuard g;
    for (auto& head : net->attr_heads) {
      head->ptr<nn::LinearImpl>(2)->weight.zero_();
      head->ptr<nn::LinearImpl>(2)->bias.fill_(60.0);
    }
    net->qa_head->ptr<nn::LinearImpl>(2)->weight.zero_();
    net->qa_head->ptr<nn::LinearImpl>(2)->bias.fill_(60.0);
  }
  CHECK(validation_mse(net, slices, tiny_augment(), 4) == 0.0);
}

TEST_CASE("contrastive training is seeded and leaves the encoder frozen") {
  const auto train = labeled_scans(6, 8);
  const auto val = labeled_scans(2, 9);
  const auto sel = band_selections(train);
  auto val_sel = band_selections(val);
  auto all_sel = sel;
  all_sel.insert(val_sel.begin(), val_sel.end());
  const auto cfg = tiny_qa(Strategy::Contrastive);
  const auto a = train_qa(train, val, all_sel, cfg, tiny_augment());
  const auto b = train_qa(train, val, all_sel, cfg, tiny_augment());
  CHECK(a.contrastive_losses.size() == 2);
  CHECK(a.contrastive_losses == b.contrastive_losses);
  CHECK(a.encoder_frozen);
  CHECK(!a.encoder_hash_before_downstream.empty());
  CHECK(a.encoder_hash_before_downstream == a.encoder_hash_after_downstream);
  CHECK(a.encoder_hash_after_downstream == module_hash(*a.net->encoder));
  CHECK(module_hash(*a.net) == module_hash(*b.net));

  testutil::TempDir tmp("qa_ckpt");
  save_qa_model(a, tmp.path());
  CHECK(std::filesystem::exists(tmp / "encoder_pretrained.pt"));
  const auto back = load_qa_model(tmp.path());
  CHECK(back.encoder_frozen);
  CHECK(module_hash(*back.net) == module_hash(*a.net));
  const std::vector<std::int64_t> slices = sel.begin()->second;
  const auto pa = predict_slices(a, train[0], slices, tiny_augment());
  const auto pb = predict_slices(back, train[0], slices, tiny_augment());
  REQUIRE(pa.probs.size() == pb.probs.size());
  for (std::size_t i = 0; i < pa.probs.size(); ++i) CHECK(pa.probs[i].p_qa == pb.probs[i].p_qa);

  auto sidecar = nlohmann::json::parse(std::ifstream(tmp / "qa_model.json"));
  sidecar["format_version"] = kQAFormatVersion + 1;
  std::ofstream(tmp / "qa_model.json") << sidecar.dump();
  CHECK_ERROR_KIND(load_qa_model(tmp.path()), ErrorKind::Format);
  CHECK_ERROR_KIND(load_qa_model(tmp / "absent"), ErrorKind::MissingArtifact);
}

TEST_CASE("multitask training needs masks") {
  auto train = labeled_scans(3, 8);
  const auto sel = band_selections(train);
  for (auto& s : train) s.blood_pool_mask.reset();
  CHECK_ERROR_KIND(train_qa(train, {}, sel, tiny_qa(Strategy::MultiTask), tiny_augment()), ErrorKind::Data);
}

TEST_CASE("per-slice binarization and undetermined scans") {
  CHECK(binarize_probability(0.9) == 1);
  CHECK(binarize_probability(0.8) == 1);
  CHECK(binarize_probability(0.2) == 0);
  CHECK(binarize_probability(0.5) == 1);
  CHECK(binarize_probability(std::nextafter(0.5, 0.0)) == 0);

  QAModel model;
  model.config = tiny_qa(Strategy::Baseline);
  model.net = make_qa_net(model.config);
  const auto scans = labeled_scans(1, 1);
  const auto none = predict_slices(model, scans[0], {}, tiny_augment());
  CHECK(none.undetermined());
  const std::vector<std::int64_t> two = {1, 2};
  const auto some = predict_slices(model, scans[0], two, tiny_augment());
  CHECK_FALSE(some.undetermined());
  CHECK(some.binary.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(some.binary[i] == binarize_probability(some.probs[i].p_qa));
}

#include "atriaqc/qa_models.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>
#include "atriaqc/log.hpp"

#include "atriaqc/config_json.hpp"
#include "atriaqc/error.hpp"
#include "atriaqc/hashing.hpp"
#include "state_snapshot.hpp"
#include "tensor_utils.hpp"

namespace atriaqc {

namespace fs = std::filesystem;
namespace nn = torch::nn;
namespace F = torch::nn::functional;

void QANetConfig::validate() const {
  for (int b : encoder_blocks) require(b >= 1, ErrorKind::Config, "encoder_blocks entries must be >= 1");
  require(encoder_width >= 1, ErrorKind::Config, "encoder_width must be >= 1");
  require(in_channels >= 1, ErrorKind::Config, "in_channels must be >= 1");
  require(attr_hidden >= 1 && qa_hidden >= 1 && proj_dim >= 1 && decoder_width >= 1, ErrorKind::Config,
          "head dimensions must be positive");
  require(image_size >= 32, ErrorKind::Config, "QA image_size must be >= 32");
  require(learning_rate > 0 && lr_min >= 0 && lr_min <= learning_rate, ErrorKind::Config,
          "need 0 <= lr_min <= learning_rate, learning_rate > 0");
  require(batch_size >= 2, ErrorKind::Config, "QA batch_size must be >= 2");
  require(epochs >= 1, ErrorKind::Config, "QA epochs must be >= 1");
  require(patience >= 1, ErrorKind::Config, "patience must be >= 1");
  require(contrastive.epochs >= 1 && contrastive.batch_size >= 1, ErrorKind::Config,
          "contrastive epochs and batch_size must be >= 1");
  require(contrastive.temperature > 0, ErrorKind::Config, "contrastive temperature must be > 0");
  contrastive.lars.validate();
}

// --- network ------------------------------------------------------------

QANetImpl::QANetImpl(const QANetConfig& config) : config_(config) {
  config_.validate();
  encoder = register_module("encoder",
                            ResidualEncoder(config.in_channels, config.encoder_width, config.encoder_blocks));
  const auto feat = encoder->feature_dim();
  for (std::size_t i = 0; i < attr_heads.size(); ++i) {
    attr_heads[i] = register_module(
        "attr_" + std::string(attribute_key(kAllAttributes[i])),
        nn::Sequential(nn::Linear(feat, config.attr_hidden), nn::ReLU(), nn::Linear(config.attr_hidden, 1)));
  }
  qa_head = register_module("qa_head",
                            nn::Sequential(nn::Linear(3, config.qa_hidden), nn::ReLU(), nn::Linear(config.qa_hidden, 1)));
  if (config.strategy == Strategy::MultiTask) {
    decoder = register_module("decoder", UNetDecoder(encoder->skip_channels(), config.decoder_width, 1));
  }
  if (config.strategy == Strategy::Contrastive) {
    projection = register_module(
        "projection", nn::Sequential(nn::Linear(feat, feat), nn::ReLU(), nn::Linear(feat, config.proj_dim)));
  }
}

torch::Tensor QANetImpl::prepare_input(const torch::Tensor& x) const {
  require(x.dim() == 4 && x.size(2) == config_.image_size && x.size(3) == config_.image_size, ErrorKind::Shape,
          "QA network expects (B, C, " + std::to_string(config_.image_size) + ", " +
              std::to_string(config_.image_size) + ") preprocessed slices");
  require(x.size(1) == 1 || x.size(1) == config_.in_channels, ErrorKind::Shape,
          "QA network input must have 1 or " + std::to_string(config_.in_channels) + " channels");
  if (x.size(1) == config_.in_channels) return x;
  return x.expand({x.size(0), config_.in_channels, x.size(2), x.size(3)});
}

torch::Tensor QANetImpl::head_logits(const torch::Tensor& pooled) {
  std::vector<torch::Tensor> attr;
  for (auto& head : attr_heads) attr.push_back(head->forward(pooled));
  const auto attr_logits = torch::cat(attr, 1);
  return torch::cat({attr_logits, qa_head->forward(attr_logits)}, 1);
}

QAForward QANetImpl::forward(const torch::Tensor& x, bool with_decoder, bool detach_decoder) {
  const auto input = prepare_input(x);
  QAForward out;
  out.features = encoder->forward(input);
  std::vector<torch::Tensor> attr;
  for (auto& head : attr_heads) attr.push_back(head->forward(out.features.pooled));
  out.attr_logits = torch::cat(attr, 1);
  out.qa_logit = qa_head->forward(out.attr_logits);
  out.logits = torch::cat({out.attr_logits, out.qa_logit}, 1);
  out.probs = torch::sigmoid(out.logits);
  if (with_decoder) {
    require(has_decoder(), ErrorKind::Config, "this QA network has no segmentation decoder");
    std::vector<torch::Tensor> skips = {out.features.stem, out.features.stages[0], out.features.stages[1],
                                        out.features.stages[2], out.features.stages[3]};
    if (detach_decoder) {
      for (auto& s : skips) s = s.detach();
    }
    auto mask = decoder->forward(skips);
    if (mask.size(2) != input.size(2) || mask.size(3) != input.size(3)) {
      mask = F::interpolate(mask, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{input.size(2), input.size(3)})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    }
    out.mask_logits = mask;
  }
  return out;
}

torch::Tensor QANetImpl::forward_baseline(const torch::Tensor& x) { return forward(x).probs; }

std::pair<torch::Tensor, torch::Tensor> QANetImpl::forward_multitask(const torch::Tensor& x) {
  auto out = forward(x, true);
  return {out.probs, torch::sigmoid(out.mask_logits)};
}

torch::Tensor QANetImpl::project(const torch::Tensor& x) {
  require(has_projection(), ErrorKind::Config, "this QA network has no projection head");
  const auto pooled = encoder->forward(prepare_input(x)).pooled;
  return F::normalize(projection->forward(pooled), F::NormalizeFuncOptions().p(2).dim(1));
}

void QANetImpl::freeze_encoder() {
  for (auto& p : encoder->parameters()) p.set_requires_grad(false);
  encoder->eval();
  encoder_frozen_ = true;
}

std::vector<torch::Tensor> QANetImpl::head_parameters() {
  std::vector<torch::Tensor> params;
  for (auto& head : attr_heads) {
    for (auto& p : head->parameters()) params.push_back(p);
  }
  for (auto& p : qa_head->parameters()) params.push_back(p);
  return params;
}

QANet make_qa_net(const QANetConfig& config) {
  config.validate();
  torch::manual_seed(config.seed);
  QANet net(config);
  if (!config.pretrained_weights.empty()) {
    require(fs::exists(config.pretrained_weights), ErrorKind::MissingArtifact,
            "pretrained encoder weights not found: " + config.pretrained_weights);
    try {
      torch::load(net->encoder, config.pretrained_weights);
    } catch (const c10::Error& e) {
      fail(ErrorKind::Format, "cannot load encoder weights: " + std::string(e.what_without_backtrace()));
    }
  }
  return net;
}

// --- data ---------------------------------------------------------------

std::vector<SliceSample> build_slice_set(std::span<const ScanRecord> scans, const SliceSelections& selections,
                                         int image_size, bool need_masks) {
  std::vector<SliceSample> samples;
  for (const auto& scan : scans) {
    require(scan.has_labels(), ErrorKind::Data, "scan " + scan.scan_id + " has no labels");
    if (need_masks) {
      require(scan.has_mask(), ErrorKind::Data, "multitask training needs a mask for scan " + scan.scan_id);
    }
    const auto it = selections.find(scan.scan_id);
    if (it == selections.end() || it->second.empty()) {
      logging::warn("scan {} has no selected slices; skipped", scan.scan_id);
      continue;
    }
    for (std::int64_t d : it->second) {
      require(d >= 0 && d < scan.dims.depth, ErrorKind::Data,
              "selection for " + scan.scan_id + " references slice " + std::to_string(d));
      SliceSample s;
      s.image = resize_slice(slice_tensor(scan, d), image_size);
      if (scan.has_mask()) s.mask = resize_mask(mask_tensor(scan, d), image_size);
      s.labels = scan.labels->as_array();
      s.scan_id = scan.scan_id;
      s.slice = d;
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

namespace {

struct Batch {
  torch::Tensor x;  // (B, 1, S, S)
  torch::Tensor y;  // (B, 4)
  torch::Tensor m;  // (B, 1, S, S) when requested
};

Batch make_batch(std::span<const SliceSample> samples, std::span<const std::int64_t> indices, bool augmenting,
                 const AugmentConfig& augment_config, std::uint64_t seed, std::uint64_t epoch, bool with_masks) {
  std::vector<torch::Tensor> xs, ys, ms;
  for (std::int64_t k : indices) {
    const auto& s = samples[static_cast<std::size_t>(k)];
    torch::Tensor image = s.image;
    std::optional<torch::Tensor> mask = with_masks ? s.mask : std::nullopt;
    if (augmenting) {
      auto rng = item_rng(seed, epoch, static_cast<std::uint64_t>(k));
      auto a = augment(image, mask, augment_config, rng);
      image = a.image;
      mask = a.mask;
    }
    xs.push_back(normalize_slice(image, augment_config));
    ys.push_back(torch::tensor(std::vector<float>(s.labels.begin(), s.labels.end())));
    if (with_masks) {
      require(mask.has_value(), ErrorKind::Data, "slice of scan " + s.scan_id + " has no mask");
      ms.push_back(*mask);
    }
  }
  Batch b;
  b.x = torch::stack(xs).unsqueeze(1);
  b.y = torch::stack(ys);
  if (with_masks) b.m = torch::stack(ms).unsqueeze(1);
  return b;
}

std::vector<std::int64_t> to_vector(const torch::Tensor& t) {
  return std::vector<std::int64_t>(t.data_ptr<std::int64_t>(), t.data_ptr<std::int64_t>() + t.numel());
}

constexpr std::uint64_t kContrastiveStream = 0xC0457A57ull;

}  // namespace

double validation_mse(QANet& net, std::span<const SliceSample> slices, const AugmentConfig& augment_config,
                      int batch_size) {
  require(!slices.empty(), ErrorKind::Data, "validation_mse needs at least one slice");
  torch::NoGradGuard no_grad;
  net->eval();
  double sq_sum = 0;
  std::int64_t count = 0;
  const auto n = static_cast<std::int64_t>(slices.size());
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const auto end = std::min<std::int64_t>(n, start + batch_size);
    std::vector<std::int64_t> idx;
    for (auto k = start; k < end; ++k) idx.push_back(k);
    const auto b = make_batch(slices, idx, false, augment_config, 0, 0, false);
    const auto probs = net->forward_baseline(b.x);
    sq_sum += (probs - b.y).pow(2).sum().item<double>();
    count += b.y.numel();
  }
  return sq_sum / double(count);
}

std::vector<double> pretrain_contrastive(QANet& net, std::span<const SliceSample> slices, const QANetConfig& config,
                                         const AugmentConfig& augment_config) {
  require(net->has_projection(), ErrorKind::Config, "contrastive pretraining needs a projection head");
  require(!slices.empty(), ErrorKind::Data, "contrastive pretraining needs training slices");
  const auto& cc = config.contrastive;

  std::vector<torch::Tensor> params;
  for (auto& p : net->encoder->parameters()) params.push_back(p);
  for (auto& p : net->projection->parameters()) params.push_back(p);
  Lars lars(params, cc.lars);

  const auto n = static_cast<std::int64_t>(slices.size());
  const std::uint64_t seed = config.seed ^ kContrastiveStream;
  std::vector<double> epoch_losses;
  for (int epoch = 1; epoch <= cc.epochs; ++epoch) {
    net->train();
    const auto order = to_vector(seeded_permutation(n, seed, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0;
    int batches = 0;
    SupConStats stats;
    for (std::int64_t start = 0; start < n; start += cc.batch_size) {
      const auto end = std::min<std::int64_t>(n, start + cc.batch_size);
      std::vector<torch::Tensor> views;
      std::map<Attribute, std::vector<std::int64_t>> labels;
      for (auto i = start; i < end; ++i) {
        const auto k = order[static_cast<std::size_t>(i)];
        const auto& s = slices[static_cast<std::size_t>(k)];
        auto rng = item_rng(seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(k));
        auto [first, second] = two_views(s.image, augment_config, rng);
        views.push_back(first);
        views.push_back(second);
        for (std::size_t a = 0; a < kAllAttributes.size(); ++a) {
          const auto label = static_cast<std::int64_t>(s.labels[a]);
          labels[kAllAttributes[a]].push_back(label);
          labels[kAllAttributes[a]].push_back(label);
        }
      }
      ContrastiveBatch batch;
      batch.embeddings = net->project(torch::stack(views).unsqueeze(1));
      batch.temperature = cc.temperature;
      for (auto& [attr, values] : labels) batch.labels[attr] = torch::tensor(values, torch::kLong);
      const auto loss = combined_supcon_loss(batch, cc.reduction, &stats);
      const double value = loss.item<double>();
      require(std::isfinite(value), ErrorKind::Numeric, "contrastive pretraining diverged (non-finite loss)");
      lars.zero_grad();
      loss.backward();
      lars.step();
      loss_sum += value;
      ++batches;
    }
    epoch_losses.push_back(loss_sum / double(batches));
    if (stats.anchors_without_positive > 0) {
      logging::debug("contrastive epoch {}: {} of {} anchor terms had no positive", epoch,
                    stats.anchors_without_positive, stats.anchors);
    }
    logging::info("contrastive epoch {}/{}: supcon loss {:.4f}", epoch, cc.epochs, epoch_losses.back());
  }
  return epoch_losses;
}

QAModel train_qa(std::span<const ScanRecord> train_scans, std::span<const ScanRecord> val_scans,
                 const SliceSelections& selections, const QANetConfig& config, const AugmentConfig& augment_config) {
  config.validate();
  require(augment_config.image_size == config.image_size, ErrorKind::Config,
          "augment image_size must equal the QA image_size");
  const bool multitask = config.strategy == Strategy::MultiTask;
  const auto train = build_slice_set(train_scans, selections, config.image_size, multitask);
  const auto val = build_slice_set(val_scans, selections, config.image_size, false);
  require(!train.empty(), ErrorKind::Config, "train_qa: no training slices after selection");

  QAModel model;
  model.config = config;
  model.net = make_qa_net(config);
  auto& net = model.net;

  if (config.strategy == Strategy::Contrastive) {
    model.contrastive_losses = pretrain_contrastive(net, train, config, augment_config);
    net->freeze_encoder();
    model.encoder_frozen = true;
    model.encoder_hash_before_downstream = module_hash(*net->encoder);
  }

  std::vector<torch::Tensor> trainable;
  if (model.encoder_frozen) {
    trainable = net->head_parameters();
  } else {
    for (auto& p : net->parameters()) trainable.push_back(p);
  }
  torch::optim::Adam adam(trainable, torch::optim::AdamOptions(config.learning_rate));

  EarlyStopState stopper;
  stopper.patience = config.patience;
  stopper.min_delta = config.min_delta;
  StateSnapshot best;
  const auto n = static_cast<std::int64_t>(train.size());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch - 1, config.epochs, config.learning_rate, config.lr_min);
    for (auto& group : adam.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

    net->train();
    if (model.encoder_frozen) net->encoder->eval();
    const auto order = to_vector(seeded_permutation(n, config.seed, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0;
    int batches = 0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const auto end = std::min<std::int64_t>(n, start + config.batch_size);
      if (end - start < 2) continue;  // BatchNorm needs more than one sample
      const std::span<const std::int64_t> idx(order.data() + start, static_cast<std::size_t>(end - start));
      const auto b = make_batch(train, idx, true, augment_config, config.seed, static_cast<std::uint64_t>(epoch),
                                multitask);
      torch::Tensor loss;
      if (model.encoder_frozen) {
        torch::Tensor pooled;
        {
          torch::NoGradGuard no_grad;
          pooled = net->encoder->forward(net->prepare_input(b.x)).pooled;
        }
        loss = qa_bce_loss(b.y, torch::sigmoid(net->head_logits(pooled)));
      } else if (multitask) {
        const auto out = net->forward(b.x, true);
        loss = multitask_loss(qa_bce_loss(b.y, out.probs), dice_loss(b.m, torch::sigmoid(out.mask_logits)));
      } else {
        loss = qa_bce_loss(b.y, net->forward_baseline(b.x));
      }
      const double value = loss.item<double>();
      require(std::isfinite(value), ErrorKind::Numeric, "QA training diverged (non-finite loss)");
      adam.zero_grad();
      loss.backward();
      adam.step();
      loss_sum += value;
      ++batches;
    }

    QAEpoch record{epoch, lr, batches ? loss_sum / batches : 0.0, std::numeric_limits<double>::quiet_NaN()};
    const double metric = val.empty() ? record.train_loss : validation_mse(net, val, augment_config, config.batch_size);
    record.val_mse = val.empty() ? std::numeric_limits<double>::quiet_NaN() : metric;
    model.history.push_back(record);
    const auto decision = early_stop_update(stopper, metric);
    if (decision.improved) best.capture(*net);
    logging::info("qa[{}] epoch {}/{}: lr {:.2e}, loss {:.4f}, val mse {:.4f}{}", strategy_name(config.strategy),
                 epoch, config.epochs, lr, record.train_loss, record.val_mse, decision.improved ? " *" : "");
    if (decision.should_stop) {
      logging::info("qa[{}] early stop after epoch {} (best epoch {})", strategy_name(config.strategy), epoch,
                   stopper.best_epoch);
      break;
    }
  }
  if (!best.empty()) best.restore(*net);
  model.best_val_mse = val.empty() ? std::numeric_limits<double>::quiet_NaN() : stopper.best_metric;
  model.best_epoch = stopper.best_epoch;
  if (model.encoder_frozen) model.encoder_hash_after_downstream = module_hash(*net->encoder);
  net->eval();
  return model;
}

// --- inference ----------------------------------------------------------

ScanPrediction predict_slices(const QAModel& model, const ScanRecord& scan, std::span<const std::int64_t> slices,
                              const AugmentConfig& augment_config) {
  ScanPrediction pred;
  if (slices.empty()) return pred;
  torch::NoGradGuard no_grad;
  auto net = model.net;
  net->eval();
  std::vector<torch::Tensor> xs;
  for (std::int64_t d : slices) {
    xs.push_back(normalize_slice(resize_slice(slice_tensor(scan, d), model.config.image_size), augment_config));
  }
  const auto probs = net->forward_baseline(torch::stack(xs).unsqueeze(1)).to(torch::kDouble).contiguous();
  const auto acc = probs.accessor<double, 2>();
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto row = static_cast<std::int64_t>(i);
    QAPrediction p{acc[row][0], acc[row][1], acc[row][2], acc[row][3]};
    pred.slices.push_back(slices[i]);
    pred.probs.push_back(p);
    pred.binary.push_back(binarize_probability(p.p_qa));
  }
  return pred;
}

ScanPrediction predict_scan(const QAModel& model, const ScanRecord& scan, const DetectorModel& detector,
                            const AugmentConfig& augment_config) {
  const auto mask = predict_mask(detector, scan);
  const auto slices = select_slices(mask, detector.config.threshold, detector.config.min_pixels);
  if (slices.empty()) logging::warn("scan {}: detector selected no slices; prediction undetermined", scan.scan_id);
  return predict_slices(model, scan, slices, augment_config);
}

// --- checkpoints --------------------------------------------------------

void save_qa_model(const QAModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  torch::save(model.net, (dir / "qa_model.pt").string());
  if (model.config.strategy == Strategy::Contrastive) {
    torch::save(model.net->encoder, (dir / "encoder_pretrained.pt").string());
  }
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : model.history) {
    history.push_back({{"epoch", h.epoch},
                       {"lr", h.lr},
                       {"train_loss", json_number(h.train_loss)},
                       {"val_mse", json_number(h.val_mse)}});
  }
  const nlohmann::json sidecar = {{"format_version", kQAFormatVersion},
                                  {"strategy", strategy_name(model.config.strategy)},
                                  {"config", to_json(model.config)},
                                  {"seed", model.config.seed},
                                  {"best_val_mse", json_number(model.best_val_mse)},
                                  {"best_epoch", model.best_epoch},
                                  {"encoder_frozen", model.encoder_frozen},
                                  {"encoder_hash_before_downstream", model.encoder_hash_before_downstream},
                                  {"encoder_hash_after_downstream", model.encoder_hash_after_downstream},
                                  {"weights_sha256", module_hash(*model.net)},
                                  {"contrastive_losses", model.contrastive_losses},
                                  {"history", history}};
  write_json_file(dir / "qa_model.json", sidecar);
}

QAModel load_qa_model(const fs::path& dir) {
  const fs::path sidecar_path = dir / "qa_model.json";
  const fs::path weights = dir / "qa_model.pt";
  require(fs::exists(sidecar_path) && fs::exists(weights), ErrorKind::MissingArtifact,
          "no QA checkpoint in " + dir.string());
  const auto sidecar = read_json_file(sidecar_path);
  int version = -1;
  try {
    version = sidecar.at("format_version").get<int>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Format, "qa_model.json lacks format_version");
  }
  require(version == kQAFormatVersion, ErrorKind::Format,
          "QA checkpoint format_version " + std::to_string(version) + " != " + std::to_string(kQAFormatVersion));
  QAModel model;
  try {
    merge(model.config, sidecar.at("config"));
    model.best_val_mse = json_to_number(sidecar.at("best_val_mse"));
    model.best_epoch = sidecar.value("best_epoch", 0);
    model.encoder_frozen = sidecar.at("encoder_frozen").get<bool>();
    model.encoder_hash_before_downstream = sidecar.value("encoder_hash_before_downstream", "");
    model.encoder_hash_after_downstream = sidecar.value("encoder_hash_after_downstream", "");
    model.contrastive_losses = sidecar.value("contrastive_losses", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed qa_model.json: ") + e.what());
  }
  auto config = model.config;
  config.pretrained_weights.clear();
  model.net = QANet(config);
  try {
    torch::load(model.net, weights.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::Format, "cannot load QA weights: " + std::string(e.what_without_backtrace()));
  }
  if (model.encoder_frozen) model.net->freeze_encoder();
  model.net->eval();
  return model;
}

}  // namespace atriaqc

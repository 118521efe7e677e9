#include "atriaqc/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>
#include "atriaqc/log.hpp"

#include "atriaqc/augment.hpp"
#include "atriaqc/config_json.hpp"
#include "atriaqc/error.hpp"
#include "atriaqc/hashing.hpp"
#include "atriaqc/losses.hpp"
#include "state_snapshot.hpp"
#include "tensor_utils.hpp"

namespace atriaqc {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

void DetectorConfig::validate() const {
  require(threshold > 0 && threshold < 1, ErrorKind::Config, "detector threshold must lie in (0,1)");
  require(min_pixels >= 1, ErrorKind::Config, "min_pixels must be >= 1");
  require(learning_rate > 0, ErrorKind::Config, "detector learning_rate must be > 0");
  require(batch_size >= 1, ErrorKind::Config, "detector batch_size must be >= 1");
  require(epochs >= 1, ErrorKind::Config, "detector epochs must be >= 1");
  require(image_size >= 8, ErrorKind::Config, "detector image_size must be >= 8");
  require(depth >= 1 && depth <= 6, ErrorKind::Config, "detector depth must lie in 1..6");
  require(base_width >= 1, ErrorKind::Config, "detector base_width must be >= 1");
}

std::span<const float> ProbMask::slice(std::int64_t d) const {
  require(d >= 0 && d < dims.depth, ErrorKind::Domain, "slice index out of range");
  return std::span<const float>(values).subspan(static_cast<std::size_t>(d * dims.slice_size()),
                                                static_cast<std::size_t>(dims.slice_size()));
}

UNet make_detector_net(const DetectorConfig& config) {
  config.validate();
  torch::manual_seed(config.seed);
  return UNet(1, config.base_width, config.depth);
}

namespace {

struct SliceTensors {
  torch::Tensor images;  // (N, 1, S, S) normalized
  torch::Tensor masks;   // (N, 1, S, S)
  std::vector<std::int64_t> scan_of;  // scan index per slice
};

SliceTensors stack_slices(std::span<const ScanRecord> scans, int image_size) {
  std::vector<torch::Tensor> images, masks;
  SliceTensors out;
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const auto& scan = scans[s];
    for (std::int64_t d = 0; d < scan.dims.depth; ++d) {
      images.push_back(preprocess(slice_tensor(scan, d), image_size));
      masks.push_back(resize_mask(mask_tensor(scan, d), image_size));
      out.scan_of.push_back(static_cast<std::int64_t>(s));
    }
  }
  out.images = torch::stack(images).unsqueeze(1);
  out.masks = torch::stack(masks).unsqueeze(1);
  return out;
}

// Mean per-scan hard Dice at model resolution.
double mean_scan_dice(UNet& net, const SliceTensors& data, std::size_t n_scans, double t, int batch_size) {
  torch::NoGradGuard no_grad;
  net->eval();
  std::vector<double> inter(n_scans, 0), pred(n_scans, 0), truth(n_scans, 0);
  const auto n = data.images.size(0);
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const auto end = std::min<std::int64_t>(n, start + batch_size);
    const auto probs = torch::sigmoid(net->forward(data.images.slice(0, start, end)));
    const auto hard = (probs > t).to(torch::kFloat);
    const auto gt = data.masks.slice(0, start, end);
    const auto i_sum = (hard * gt).sum({1, 2, 3});
    const auto p_sum = hard.sum({1, 2, 3});
    const auto g_sum = gt.sum({1, 2, 3});
    for (std::int64_t k = 0; k < end - start; ++k) {
      const auto s = static_cast<std::size_t>(data.scan_of[static_cast<std::size_t>(start + k)]);
      inter[s] += i_sum[k].item<double>();
      pred[s] += p_sum[k].item<double>();
      truth[s] += g_sum[k].item<double>();
    }
  }
  double total = 0;
  for (std::size_t s = 0; s < n_scans; ++s) {
    const double denom = pred[s] + truth[s];
    total += denom == 0 ? 1.0 : 2.0 * inter[s] / denom;
  }
  return total / double(n_scans);
}

}  // namespace

DetectorModel train_detector(std::span<const ScanRecord> train_scans, std::span<const ScanRecord> val_scans,
                             const DetectorConfig& config) {
  config.validate();
  require(!train_scans.empty(), ErrorKind::Config, "train_detector: empty training set");
  for (const auto& scan : train_scans) {
    require(scan.has_mask(), ErrorKind::Data, "train_detector: training scan " + scan.scan_id + " has no mask");
  }
  for (const auto& scan : val_scans) {
    require(scan.has_mask(), ErrorKind::Data, "train_detector: validation scan " + scan.scan_id + " has no mask");
  }

  DetectorModel model;
  model.config = config;
  model.net = make_detector_net(config);
  auto& net = model.net;

  const auto train = stack_slices(train_scans, config.image_size);
  const auto val = val_scans.empty() ? SliceTensors{} : stack_slices(val_scans, config.image_size);
  const auto n = train.images.size(0);

  torch::optim::Adam adam(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  StateSnapshot best;
  model.best_val_dice = val_scans.empty() ? std::numeric_limits<double>::quiet_NaN() : -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    net->train();
    const auto order = seeded_permutation(n, config.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0;
    std::int64_t batches = 0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const auto end = std::min<std::int64_t>(n, start + config.batch_size);
      if (end - start < 2 && n >= 2) continue;  // BatchNorm needs more than one sample
      const auto idx = order.slice(0, start, end);
      const auto x = train.images.index_select(0, idx);
      const auto y = train.masks.index_select(0, idx);
      adam.zero_grad();
      const auto loss = dice_loss(y, torch::sigmoid(net->forward(x)));
      const double value = loss.item<double>();
      require(std::isfinite(value), ErrorKind::Numeric, "detector training diverged (non-finite loss)");
      loss.backward();
      adam.step();
      loss_sum += value;
      ++batches;
    }
    DetectorEpoch record{epoch, batches ? loss_sum / double(batches) : 0.0, std::numeric_limits<double>::quiet_NaN()};
    if (!val_scans.empty()) {
      record.val_dice = mean_scan_dice(net, val, val_scans.size(), config.threshold, config.batch_size);
      if (record.val_dice > model.best_val_dice) {
        model.best_val_dice = record.val_dice;
        model.best_epoch = epoch;
        best.capture(*net);
      }
    }
    model.history.push_back(record);
    logging::info("detector epoch {}/{}: dice loss {:.4f}, val dice {:.4f}", epoch, config.epochs,
                 record.train_loss, record.val_dice);
  }
  if (best.empty()) {
    model.best_epoch = config.epochs;
  } else {
    best.restore(*net);
  }
  net->eval();
  return model;
}

ProbMask predict_mask(const DetectorModel& model, const ScanRecord& scan) {
  torch::NoGradGuard no_grad;
  auto net = model.net;
  net->eval();
  const int size = model.config.image_size;
  std::vector<torch::Tensor> slices;
  for (std::int64_t d = 0; d < scan.dims.depth; ++d) slices.push_back(preprocess(slice_tensor(scan, d), size));
  auto probs = torch::sigmoid(net->forward(torch::stack(slices).unsqueeze(1)));
  if (probs.size(2) != scan.dims.height || probs.size(3) != scan.dims.width) {
    probs = F::interpolate(probs, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{scan.dims.height, scan.dims.width})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
  }
  probs = probs.clamp(0.0, 1.0).contiguous();
  ProbMask mask;
  mask.dims = scan.dims;
  mask.values.assign(probs.data_ptr<float>(), probs.data_ptr<float>() + probs.numel());
  return mask;
}

std::vector<std::int64_t> select_slices(const ProbMask& mask, double t, int min_pixels) {
  require(t > 0 && t < 1, ErrorKind::Config, "slice threshold must lie in (0,1)");
  require(min_pixels >= 1, ErrorKind::Config, "min_pixels must be >= 1");
  std::vector<std::int64_t> selected;
  for (std::int64_t d = 0; d < mask.dims.depth; ++d) {
    const auto values = mask.slice(d);
    std::int64_t count = 0;
    for (float v : values) {
      if (v > t && ++count >= min_pixels) break;
    }
    if (count >= min_pixels) selected.push_back(d);
  }
  return selected;
}

double hard_dice(const ProbMask& mask, std::span<const std::uint8_t> truth, double t) {
  require(truth.size() == mask.values.size(), ErrorKind::Shape, "hard_dice: shape mismatch");
  double inter = 0, pred = 0, gt = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = mask.values[i] > t;
    pred += p;
    gt += truth[i];
    inter += p && truth[i];
  }
  return pred + gt == 0 ? 1.0 : 2.0 * inter / (pred + gt);
}

double slice_recall(std::span<const std::int64_t> selected, const ScanRecord& scan) {
  std::int64_t la_slices = 0, hit = 0;
  for (std::int64_t d = 0; d < scan.dims.depth; ++d) {
    const auto m = scan.mask_slice(d);
    if (std::find(m.begin(), m.end(), std::uint8_t{1}) == m.end()) continue;
    ++la_slices;
    if (std::find(selected.begin(), selected.end(), d) != selected.end()) ++hit;
  }
  return la_slices == 0 ? 1.0 : double(hit) / double(la_slices);
}

void save_detector(const DetectorModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  torch::save(model.net, (dir / "detector.pt").string());
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : model.history) {
    history.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_dice", json_number(h.val_dice)}});
  }
  const nlohmann::json sidecar = {{"format_version", kDetectorFormatVersion},
                                  {"config", to_json(model.config)},
                                  {"seed", model.config.seed},
                                  {"best_val_dice", json_number(model.best_val_dice)},
                                  {"best_epoch", model.best_epoch},
                                  {"weights_sha256", module_hash(*model.net)},
                                  {"history", history}};
  write_json_file(dir / "detector.json", sidecar);
}

DetectorModel load_detector(const fs::path& dir) {
  const fs::path sidecar_path = dir / "detector.json";
  const fs::path weights = dir / "detector.pt";
  require(fs::exists(sidecar_path) && fs::exists(weights), ErrorKind::MissingArtifact,
          "no detector checkpoint in " + dir.string());
  const auto sidecar = read_json_file(sidecar_path);
  int version = -1;
  try {
    version = sidecar.at("format_version").get<int>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Format, "detector.json lacks format_version");
  }
  require(version == kDetectorFormatVersion, ErrorKind::Format,
          "detector checkpoint format_version " + std::to_string(version) + " != " +
              std::to_string(kDetectorFormatVersion));
  DetectorModel model;
  try {
    merge(model.config, sidecar.at("config"));
    model.best_val_dice = json_to_number(sidecar.at("best_val_dice"));
    model.best_epoch = sidecar.value("best_epoch", 0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed detector.json: ") + e.what());
  }
  model.net = UNet(1, model.config.base_width, model.config.depth);
  try {
    torch::load(model.net, weights.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::Format, "cannot load detector weights: " + std::string(e.what_without_backtrace()));
  }
  model.net->eval();
  return model;
}

}  // namespace atriaqc

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "atriaqc/datamodel.hpp"
#include "atriaqc/nets.hpp"

namespace atriaqc {

/// Stage-1 left-atrium detector settings.
struct DetectorConfig {
  double threshold = 0.5;  // strict: a pixel counts when p > threshold
  int min_pixels = 1;
  double learning_rate = 1e-3;
  int batch_size = 128;
  int epochs = 20;
  std::uint64_t seed = 0;
  int image_size = 128;
  int depth = 4;
  int base_width = 16;

  void validate() const;
};

/// Per-voxel LA blood-pool probability, same shape as the source volume.
struct ProbMask {
  Dims3 dims;
  std::vector<float> values;

  std::span<const float> slice(std::int64_t d) const;
};

struct DetectorEpoch {
  int epoch = 0;
  double train_loss = 0;
  double val_dice = 0;
};

struct DetectorModel {
  DetectorConfig config;
  UNet net{nullptr};
  double best_val_dice = 0;  // NaN when trained without validation scans
  int best_epoch = 0;
  std::vector<DetectorEpoch> history;
};

/// Builds an untrained detector network from the config (seeded init).
UNet make_detector_net(const DetectorConfig& config);

/// Adam + per-slice Dice loss on every slice of the training scans; returns
/// the checkpoint with the best validation Dice.
DetectorModel train_detector(std::span<const ScanRecord> train_scans,
                             std::span<const ScanRecord> val_scans, const DetectorConfig& config);

/// Sigmoid probabilities at the scan's native resolution.
ProbMask predict_mask(const DetectorModel& model, const ScanRecord& scan);

/// Slices with at least `min_pixels` values strictly greater than t, ascending.
std::vector<std::int64_t> select_slices(const ProbMask& mask, double t, int min_pixels = 1);

/// Volumetric Dice of (mask > t) against a binary ground truth; 1 when both are empty.
double hard_dice(const ProbMask& mask, std::span<const std::uint8_t> truth, double t);

/// Fraction of ground-truth LA slices (any voxel set) that `selected` contains.
/// Returns 1 when the scan has no LA slice.
double slice_recall(std::span<const std::int64_t> selected, const ScanRecord& scan);

inline constexpr int kDetectorFormatVersion = 1;

/// `<dir>/detector.pt` (weights) + `<dir>/detector.json` sidecar.
void save_detector(const DetectorModel& model, const std::filesystem::path& dir);
DetectorModel load_detector(const std::filesystem::path& dir);

}  // namespace atriaqc

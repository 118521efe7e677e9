#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "atriaqc/augment.hpp"
#include "atriaqc/datamodel.hpp"
#include "atriaqc/detector.hpp"
#include "atriaqc/losses.hpp"
#include "atriaqc/nets.hpp"
#include "atriaqc/optim.hpp"

namespace atriaqc {

enum class Strategy {
  Baseline,     // attribute + QA heads, combined BCE
  MultiTask,    // baseline plus blood-pool decoder, BCE + Dice
  Contrastive,  // SupCon pretraining, frozen encoder, then baseline heads
};

struct ContrastiveConfig {
  int epochs = 100;
  int batch_size = 512;  // source slices per batch; each contributes two views
  double temperature = 0.07;
  AnchorReduction reduction = AnchorReduction::Mean;
  LarsConfig lars;  // base_lr 0.5
};

struct QANetConfig {
  Strategy strategy = Strategy::Baseline;
  std::array<int, 4> encoder_blocks = {3, 4, 6, 3};
  int encoder_width = 64;
  int in_channels = 3;
  std::string pretrained_weights;  // optional encoder checkpoint; empty = random init
  int attr_hidden = 128;
  int qa_hidden = 16;
  int proj_dim = 128;
  int decoder_width = 16;
  int image_size = 128;
  double learning_rate = 1e-3;
  double lr_min = 0.0;
  int batch_size = 128;
  int epochs = 40;
  int patience = 7;
  double min_delta = 0.0;
  ContrastiveConfig contrastive;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Four sigmoid outputs [p_mn, p_s, p_eat, p_qa].
struct QAPrediction {
  double p_mn = 0, p_s = 0, p_eat = 0, p_qa = 0;
};

struct QAForward {
  torch::Tensor attr_logits;  // (B, 3)
  torch::Tensor qa_logit;     // (B, 1)
  torch::Tensor logits;       // (B, 4) = [attr_logits, qa_logit]
  torch::Tensor probs;        // (B, 4)
  EncoderFeatures features;
  torch::Tensor mask_logits;  // (B, 1, S, S) when the decoder ran
};

/// Residual encoder, three attribute MLPs on the pooled feature and a QA MLP
/// that sees only the three attribute logits. A segmentation decoder is
/// attached for MultiTask and a projection head for Contrastive.
class QANetImpl : public torch::nn::Module {
 public:
  explicit QANetImpl(const QANetConfig& config);

  /// `x` is (B, 1 or in_channels, S, S) with S = image_size; single-channel
  /// input is replicated. Throws Shape otherwise.
  QAForward forward(const torch::Tensor& x, bool with_decoder = false, bool detach_decoder = false);

  torch::Tensor forward_baseline(const torch::Tensor& x);
  std::pair<torch::Tensor, torch::Tensor> forward_multitask(const torch::Tensor& x);
  /// L2-normalized projection of the pooled encoder feature.
  torch::Tensor project(const torch::Tensor& x);

  /// Head logits (B, 4) from a pooled encoder feature.
  torch::Tensor head_logits(const torch::Tensor& pooled);

  torch::Tensor prepare_input(const torch::Tensor& x) const;

  void freeze_encoder();
  bool encoder_frozen() const { return encoder_frozen_; }
  bool has_decoder() const { return !decoder.is_empty(); }
  bool has_projection() const { return !projection.is_empty(); }

  std::vector<torch::Tensor> head_parameters();

  const QANetConfig& config() const { return config_; }

  ResidualEncoder encoder{nullptr};
  std::array<torch::nn::Sequential, 3> attr_heads{nullptr, nullptr, nullptr};
  torch::nn::Sequential qa_head{nullptr};
  UNetDecoder decoder{nullptr};
  torch::nn::Sequential projection{nullptr};

 private:
  QANetConfig config_;
  bool encoder_frozen_ = false;
};
TORCH_MODULE(QANet);

/// Seeded construction; loads `pretrained_weights` into the encoder if set.
QANet make_qa_net(const QANetConfig& config);

/// Selected slice indices per scan id.
using SliceSelections = std::map<std::string, std::vector<std::int64_t>>;

/// One training/validation slice, resized to image_size but not normalized.
struct SliceSample {
  torch::Tensor image;                 // (S, S)
  std::optional<torch::Tensor> mask;   // (S, S) in {0,1}
  std::array<float, 4> labels{};
  std::string scan_id;
  std::int64_t slice = 0;
};

/// Expands scans to their selected slices. Scans with no selected slice are
/// skipped with a warning; the scan label is broadcast to each slice.
std::vector<SliceSample> build_slice_set(std::span<const ScanRecord> scans,
                                         const SliceSelections& selections, int image_size,
                                         bool need_masks);

struct QAEpoch {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_mse = 0;
};

struct QAModel {
  QANetConfig config;
  QANet net{nullptr};
  double best_val_mse = 0;
  int best_epoch = 0;
  bool encoder_frozen = false;
  std::vector<QAEpoch> history;
  std::vector<double> contrastive_losses;  // per pretraining epoch
  std::string encoder_hash_before_downstream;
  std::string encoder_hash_after_downstream;
};

/// Mean squared error between the four sigmoid outputs and the binary
/// targets over all slices (no augmentation).
double validation_mse(QANet& net, std::span<const SliceSample> slices, const AugmentConfig& augment,
                      int batch_size);

/// SupCon pretraining of encoder + projection with LARS. Returns the mean
/// loss of each epoch.
std::vector<double> pretrain_contrastive(QANet& net, std::span<const SliceSample> slices,
                                         const QANetConfig& config, const AugmentConfig& augment);

/// Trains one strategy. Adam with per-epoch cosine annealing, early stopping
/// on validation MSE; the best-validation weights are returned.
QAModel train_qa(std::span<const ScanRecord> train_scans, std::span<const ScanRecord> val_scans,
                 const SliceSelections& selections, const QANetConfig& config,
                 const AugmentConfig& augment);

/// Per-slice outputs for one scan. `slices` empty means undetermined.
struct ScanPrediction {
  std::vector<std::int64_t> slices;
  std::vector<int> binary;  // 1 iff p_qa >= 0.5
  std::vector<QAPrediction> probs;

  bool undetermined() const { return slices.empty(); }
};

inline int binarize_probability(double p) { return p >= 0.5 ? 1 : 0; }

ScanPrediction predict_slices(const QAModel& model, const ScanRecord& scan,
                              std::span<const std::int64_t> slices, const AugmentConfig& augment);
ScanPrediction predict_scan(const QAModel& model, const ScanRecord& scan, const DetectorModel& detector,
                            const AugmentConfig& augment);

inline constexpr int kQAFormatVersion = 1;

/// `<dir>/qa_model.pt` + `<dir>/qa_model.json`; contrastive runs also write
/// `<dir>/encoder_pretrained.pt`.
void save_qa_model(const QAModel& model, const std::filesystem::path& dir);
QAModel load_qa_model(const std::filesystem::path& dir);

}  // namespace atriaqc

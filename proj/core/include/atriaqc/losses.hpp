#pragma once

#include <cstdint>
#include <map>

#include <torch/torch.h>

#include "atriaqc/datamodel.hpp"

namespace atriaqc {

/// Soft Dice loss 1 - (2 sum(M * P) + eps) / (sum M + sum P + eps), computed
/// per sample over all non-batch dimensions and averaged over the batch.
torch::Tensor dice_loss(const torch::Tensor& target, const torch::Tensor& prob, double eps = 1.0);

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy over the concatenated [a_mn, a_s, a_eat, y_qa]
/// columns and the batch. `preds` are probabilities (B x 4); values are
/// clamped to [1e-7, 1 - 1e-7] before the log.
torch::Tensor qa_bce_loss(const torch::Tensor& targets, const torch::Tensor& preds);

/// Unweighted sum of the QA and segmentation terms.
torch::Tensor multitask_loss(const torch::Tensor& qa_term, const torch::Tensor& seg_term);

enum class AnchorReduction {
  Sum,   // sum over anchors, as in the SupCon objective
  Mean,  // average over anchors that have at least one positive
};

/// 2N projected embeddings (rows L2-normalized; rows 2k and 2k+1 are the two
/// views of source sample k) with one label vector per partition.
struct ContrastiveBatch {
  torch::Tensor embeddings;                    // (2N, dim)
  std::map<Attribute, torch::Tensor> labels;   // each (2N,) integer
  double temperature = 0.07;

  std::int64_t source_batch() const { return embeddings.size(0) / 2; }
  /// Checks row norms (1 +- 1e-5), even row count, label lengths and tau > 0.
  void validate() const;
};

struct SupConStats {
  std::int64_t anchors = 0;
  std::int64_t anchors_without_positive = 0;
};

/// Supervised contrastive loss for one label partition. Anchors with no
/// positive contribute 0; `stats` (if given) counts them.
torch::Tensor supcon_loss(const torch::Tensor& z, const torch::Tensor& labels, double temperature,
                          AnchorReduction reduction = AnchorReduction::Sum,
                          SupConStats* stats = nullptr);

torch::Tensor supcon_loss(const ContrastiveBatch& batch, Attribute partition,
                          AnchorReduction reduction = AnchorReduction::Sum,
                          SupConStats* stats = nullptr);

/// Sum of supcon_loss over the mn, s, eat and qa partitions. Throws Config if
/// any partition's labels are missing.
torch::Tensor combined_supcon_loss(const ContrastiveBatch& batch,
                                   AnchorReduction reduction = AnchorReduction::Sum,
                                   SupConStats* stats = nullptr);

}  // namespace atriaqc

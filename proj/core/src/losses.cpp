#include "atriaqc/losses.hpp"

#include "atriaqc/log.hpp"

#include "atriaqc/error.hpp"

namespace atriaqc {

namespace {

std::string shape_str(const torch::Tensor& t) {
  std::string s = "[";
  for (std::int64_t i = 0; i < t.dim(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.size(i));
  }
  return s + "]";
}

}  // namespace

torch::Tensor dice_loss(const torch::Tensor& target, const torch::Tensor& prob, double eps) {
  require(target.sizes() == prob.sizes(), ErrorKind::Shape,
          "dice_loss shape mismatch " + shape_str(target) + " vs " + shape_str(prob));
  require(target.dim() >= 1 && target.size(0) > 0, ErrorKind::Shape, "dice_loss needs a batch");
  const auto m = target.reshape({target.size(0), -1}).to(prob.scalar_type());
  const auto p = prob.reshape({prob.size(0), -1});
  const auto intersection = (m * p).sum(1);
  const auto denom = m.sum(1) + p.sum(1);
  const auto dice = (2.0 * intersection + eps) / (denom + eps);
  return (1.0 - dice).mean();
}

torch::Tensor qa_bce_loss(const torch::Tensor& targets, const torch::Tensor& preds) {
  require(targets.sizes() == preds.sizes(), ErrorKind::Shape,
          "qa_bce_loss shape mismatch " + shape_str(targets) + " vs " + shape_str(preds));
  require(preds.dim() == 2 && preds.size(1) == 4, ErrorKind::Shape,
          "qa_bce_loss expects B x 4, got " + shape_str(preds));
  const auto p = preds.clamp(kBceClamp, 1.0 - kBceClamp);
  const auto t = targets.to(p.scalar_type());
  return -(t * p.log() + (1.0 - t) * (1.0 - p).log()).mean();
}

torch::Tensor multitask_loss(const torch::Tensor& qa_term, const torch::Tensor& seg_term) {
  return qa_term + seg_term;
}

void ContrastiveBatch::validate() const {
  require(embeddings.defined() && embeddings.dim() == 2, ErrorKind::Shape,
          "contrastive embeddings must be 2N x dim");
  require(embeddings.size(0) >= 2 && embeddings.size(0) % 2 == 0, ErrorKind::Shape,
          "contrastive batch needs an even number (2N) of rows");
  require(temperature > 0, ErrorKind::Config, "temperature must be > 0");
  const auto norms = embeddings.detach().to(torch::kDouble).norm(2, 1);
  const double max_dev = (norms - 1.0).abs().max().item<double>();
  require(max_dev <= 1e-5, ErrorKind::Domain,
          "contrastive embeddings must be L2-normalized (max deviation " +
              std::to_string(max_dev) + ")");
  for (const auto& [attr, lab] : labels) {
    require(lab.dim() == 1 && lab.size(0) == embeddings.size(0), ErrorKind::Shape,
            "labels for partition " + std::string(attribute_key(attr)) + " must have 2N entries");
  }
}

torch::Tensor supcon_loss(const torch::Tensor& z, const torch::Tensor& labels, double temperature,
                          AnchorReduction reduction, SupConStats* stats) {
  require(z.dim() == 2, ErrorKind::Shape, "supcon_loss expects (2N, dim) embeddings");
  require(labels.dim() == 1 && labels.size(0) == z.size(0), ErrorKind::Shape,
          "supcon_loss labels must have one entry per row");
  require(temperature > 0, ErrorKind::Config, "temperature must be > 0");
  const auto n = z.size(0);
  const auto opts = torch::TensorOptions().dtype(torch::kBool).device(z.device());
  const auto self = torch::eye(n, opts);

  auto logits = torch::matmul(z, z.t()) / temperature;
  // Row max shift; any per-row constant cancels in the log-ratio.
  logits = logits - std::get<0>(logits.max(1, true)).detach();
  const auto masked = logits.masked_fill(self, -std::numeric_limits<double>::infinity());
  const auto log_denominator = torch::logsumexp(masked, 1, true);
  const auto log_prob = logits - log_denominator;

  const auto lab = labels.to(torch::kLong);
  const auto positive = lab.unsqueeze(0).eq(lab.unsqueeze(1)).logical_and(self.logical_not());
  const auto pos_count = positive.sum(1).to(z.scalar_type());
  const auto pos_sum = torch::where(positive, log_prob, torch::zeros_like(log_prob)).sum(1);
  const auto has_pos = pos_count > 0;
  const auto per_anchor =
      torch::where(has_pos, -pos_sum / pos_count.clamp_min(1.0), torch::zeros_like(pos_sum));

  const std::int64_t with_pos = has_pos.sum().item<std::int64_t>();
  if (stats) {
    stats->anchors += n;
    stats->anchors_without_positive += n - with_pos;
  }
  if (with_pos == 0) {
    logging::warn("supcon_loss: no anchor in the batch has a positive; loss is 0");
    return (z * 0.0).sum();
  }
  if (with_pos < n) {
    logging::debug("supcon_loss: {} of {} anchors have no positive", n - with_pos, n);
  }
  auto total = per_anchor.sum();
  if (reduction == AnchorReduction::Mean) total = total / double(with_pos);
  return total;
}

torch::Tensor supcon_loss(const ContrastiveBatch& batch, Attribute partition,
                          AnchorReduction reduction, SupConStats* stats) {
  batch.validate();
  const auto it = batch.labels.find(partition);
  require(it != batch.labels.end(), ErrorKind::Config,
          "contrastive batch has no labels for partition " + std::string(attribute_key(partition)));
  return supcon_loss(batch.embeddings, it->second, batch.temperature, reduction, stats);
}

torch::Tensor combined_supcon_loss(const ContrastiveBatch& batch, AnchorReduction reduction,
                                   SupConStats* stats) {
  batch.validate();
  torch::Tensor total;
  for (Attribute a : kAllAttributes) {
    const auto it = batch.labels.find(a);
    require(it != batch.labels.end(), ErrorKind::Config,
            "combined_supcon_loss: missing partition " + std::string(attribute_key(a)));
    auto term = supcon_loss(batch.embeddings, it->second, batch.temperature, reduction, stats);
    total = total.defined() ? total + term : term;
  }
  return total;
}

}  // namespace atriaqc

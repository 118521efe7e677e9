#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace atriaqc {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const int> preds, std::span<const int> labels);

/// Precision, recall, F1 and specificity. A metric whose denominator is zero
/// is reported as 0 and flagged as undefined.
struct ClassificationMetrics {
  double precision = 0, recall = 0, f1 = 0, specificity = 0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  bool specificity_undefined = false;
  ConfusionCounts counts;
};

ClassificationMetrics metrics_from_counts(const ConfusionCounts& counts);
ClassificationMetrics classification_metrics(std::span<const int> preds, std::span<const int> labels);

/// Majority vote over per-slice predictions; an exact tie is 0.
/// Throws Undetermined on an empty list.
int aggregate_mode(std::span<const int> per_slice);

/// Sample Pearson correlation. Throws Domain on length mismatch, fewer than
/// two samples, or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// F1 of the predictor that always outputs the majority class of `labels`.
double majority_baseline_f1(std::span<const int> labels);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation (n-1); 0 for a single run
};
MeanStd mean_std(std::span<const double> values);

nlohmann::json to_json(const ClassificationMetrics& m);

}  // namespace atriaqc

#include "atriaqc/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "atriaqc/error.hpp"

namespace atriaqc {

ConfusionCounts confusion(std::span<const int> preds, std::span<const int> labels) {
  require(preds.size() == labels.size(), ErrorKind::Shape,
          "prediction/label length mismatch (" + std::to_string(preds.size()) + " vs " +
              std::to_string(labels.size()) + ")");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require((preds[i] == 0 || preds[i] == 1) && (labels[i] == 0 || labels[i] == 1),
            ErrorKind::Domain, "predictions and labels must be binary");
    if (preds[i] == 1) {
      (labels[i] == 1 ? c.tp : c.fp) += 1;
    } else {
      (labels[i] == 1 ? c.fn : c.tn) += 1;
    }
  }
  return c;
}

ClassificationMetrics metrics_from_counts(const ConfusionCounts& c) {
  ClassificationMetrics m;
  m.counts = c;
  auto ratio = [](std::int64_t num, std::int64_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : double(num) / double(den);
  };
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_undefined);
  m.recall = ratio(c.tp, c.tp + c.fn, m.recall_undefined);
  m.specificity = ratio(c.tn, c.tn + c.fp, m.specificity_undefined);
  const double pr = m.precision + m.recall;
  m.f1_undefined = pr == 0.0;
  m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / pr;
  return m;
}

ClassificationMetrics classification_metrics(std::span<const int> preds,
                                             std::span<const int> labels) {
  require(!preds.empty(), ErrorKind::Domain, "classification_metrics needs at least one sample");
  return metrics_from_counts(confusion(preds, labels));
}

int aggregate_mode(std::span<const int> per_slice) {
  require(!per_slice.empty(), ErrorKind::Undetermined, "no slices to aggregate");
  std::int64_t ones = 0;
  for (int v : per_slice) {
    require(v == 0 || v == 1, ErrorKind::Domain, "per-slice predictions must be binary");
    ones += v;
  }
  const auto zeros = static_cast<std::int64_t>(per_slice.size()) - ones;
  return ones > zeros ? 1 : 0;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::Domain, "pearson needs equal-length inputs");
  require(x.size() >= 2, ErrorKind::Domain, "pearson needs at least two samples");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  require(sxx > 0 && syy > 0, ErrorKind::Domain, "pearson undefined for zero variance");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double majority_baseline_f1(std::span<const int> labels) {
  require(!labels.empty(), ErrorKind::Domain, "majority baseline needs labels");
  const auto ones = std::count(labels.begin(), labels.end(), 1);
  const int majority = 2 * ones >= static_cast<std::int64_t>(labels.size()) ? 1 : 0;
  std::vector<int> preds(labels.size(), majority);
  return classification_metrics(preds, labels).f1;
}

MeanStd mean_std(std::span<const double> values) {
  require(!values.empty(), ErrorKind::Domain, "mean_std of empty list");
  const double n = double(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1))};
}

nlohmann::json to_json(const ClassificationMetrics& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"specificity", m.specificity},
          {"undefined",
           {{"precision", m.precision_undefined},
            {"recall", m.recall_undefined},
            {"f1", m.f1_undefined},
            {"specificity", m.specificity_undefined}}},
          {"counts", {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn}, {"tn", m.counts.tn}}}};
}

}  // namespace atriaqc

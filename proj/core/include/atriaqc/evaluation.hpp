#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atriaqc/datamodel.hpp"
#include "atriaqc/detector.hpp"
#include "atriaqc/eval_metrics.hpp"
#include "atriaqc/qa_models.hpp"

namespace atriaqc {

struct ScanOutcome {
  std::string scan_id;
  int label_qa = 0;
  std::optional<int> prediction;  // empty when undetermined
  std::int64_t n_slices = 0;
  std::int64_t positive_slices = 0;
};

struct RunReport {
  std::string strategy;
  std::uint64_t seed = 0;
  ClassificationMetrics metrics;
  double majority_f1 = 0;
  std::int64_t evaluated = 0;
  std::int64_t undetermined = 0;
  std::vector<ScanOutcome> scans;
};

/// Scores per-scan mode predictions against y_qa. Undetermined scans are
/// excluded from the metrics and counted.
RunReport evaluate_predictions(std::span<const ScanRecord> scans, std::span<const ScanPrediction> predictions,
                               const std::string& strategy, std::uint64_t seed);

/// Runs the detector and QA model over every test scan, then scores.
RunReport evaluate_run(const QAModel& model, const DetectorModel& detector, std::span<const ScanRecord> test_scans,
                       const AugmentConfig& augment);

/// Pearson correlation of each attribute score with the QA score, and the full
/// 4x4 matrix, over labeled scans. Undefined entries are empty.
struct PearsonTable {
  std::int64_t n_scans = 0;
  std::map<std::string, std::map<std::string, std::optional<double>>> matrix;
};
PearsonTable pearson_table(std::span<const ScanRecord> scans);

nlohmann::json to_json(const PearsonTable& table);
/// Per-seed reports plus mean and sample std of each metric.
nlohmann::json metrics_json(std::span<const RunReport> reports);
/// Header plus one row per report.
std::string metrics_csv(std::span<const RunReport> reports);

}  // namespace atriaqc

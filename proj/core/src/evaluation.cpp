#include "atriaqc/evaluation.hpp"

#include <fmt/format.h>
#include "atriaqc/log.hpp"

#include "atriaqc/config_json.hpp"
#include "atriaqc/error.hpp"
#include "tensor_utils.hpp"

namespace atriaqc {

using nlohmann::json;

RunReport evaluate_predictions(std::span<const ScanRecord> scans, std::span<const ScanPrediction> predictions,
                               const std::string& strategy, std::uint64_t seed) {
  require(scans.size() == predictions.size(), ErrorKind::Shape, "one prediction per scan is required");
  require(!scans.empty(), ErrorKind::Data, "no test scans to evaluate");
  RunReport report;
  report.strategy = strategy;
  report.seed = seed;
  std::vector<int> preds, labels, all_labels;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    const auto& scan = scans[i];
    require(scan.has_labels(), ErrorKind::Data, "test scan " + scan.scan_id + " has no labels");
    ScanOutcome outcome;
    outcome.scan_id = scan.scan_id;
    outcome.label_qa = scan.labels->qa;
    outcome.n_slices = static_cast<std::int64_t>(predictions[i].slices.size());
    for (int b : predictions[i].binary) outcome.positive_slices += b;
    all_labels.push_back(outcome.label_qa);
    if (!predictions[i].undetermined()) {
      outcome.prediction = aggregate_mode(predictions[i].binary);
      preds.push_back(*outcome.prediction);
      labels.push_back(outcome.label_qa);
    } else {
      ++report.undetermined;
    }
    report.scans.push_back(std::move(outcome));
  }
  report.evaluated = static_cast<std::int64_t>(preds.size());
  report.metrics = preds.empty() ? metrics_from_counts({}) : classification_metrics(preds, labels);
  report.majority_f1 = majority_baseline_f1(all_labels);
  if (report.undetermined > 0) {
    logging::warn("{} of {} scans undetermined and excluded", report.undetermined, scans.size());
  }
  return report;
}

RunReport evaluate_run(const QAModel& model, const DetectorModel& detector, std::span<const ScanRecord> test_scans,
                       const AugmentConfig& augment) {
  std::vector<ScanPrediction> predictions;
  for (const auto& scan : test_scans) predictions.push_back(predict_scan(model, scan, detector, augment));
  return evaluate_predictions(test_scans, predictions, std::string(strategy_name(model.config.strategy)),
                              model.config.seed);
}

PearsonTable pearson_table(std::span<const ScanRecord> scans) {
  PearsonTable table;
  std::map<Attribute, std::vector<double>> columns;
  for (const auto& scan : scans) {
    if (!scan.raw_scores) continue;
    ++table.n_scans;
    for (Attribute a : kAllAttributes) columns[a].push_back(scan.raw_scores->get(a));
  }
  for (Attribute a : kAllAttributes) {
    for (Attribute b : kAllAttributes) {
      std::optional<double> r;
      try {
        r = pearson(columns[a], columns[b]);
      } catch (const Error&) {
      }
      table.matrix[std::string(attribute_key(a))][std::string(attribute_key(b))] = r;
    }
  }
  return table;
}

json to_json(const PearsonTable& table) {
  json matrix = json::object();
  for (const auto& [row, cols] : table.matrix) {
    for (const auto& [col, r] : cols) matrix[row][col] = r ? json(*r) : json(nullptr);
  }
  json vs_qa = json::object();
  for (Attribute a : {Attribute::MyocardiumNulling, Attribute::Sharpness, Attribute::AortaValveEnhancement}) {
    const std::string key(attribute_key(a));
    vs_qa[key] = matrix[key]["qa"];
  }
  return {{"n_scans", table.n_scans}, {"attribute_vs_qa", vs_qa}, {"matrix", matrix}};
}

namespace {

constexpr const char* kMetricNames[] = {"precision", "recall", "f1", "specificity"};

double metric_value(const ClassificationMetrics& m, std::string_view name) {
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "f1") return m.f1;
  return m.specificity;
}

}  // namespace

json metrics_json(std::span<const RunReport> reports) {
  json runs = json::array();
  for (const auto& r : reports) {
    json scans = json::array();
    for (const auto& s : r.scans) {
      scans.push_back({{"scan_id", s.scan_id},
                       {"label_qa", s.label_qa},
                       {"prediction", s.prediction ? json(*s.prediction) : json(nullptr)},
                       {"n_slices", s.n_slices},
                       {"positive_slices", s.positive_slices}});
    }
    runs.push_back({{"strategy", r.strategy},
                    {"seed", r.seed},
                    {"metrics", to_json(r.metrics)},
                    {"majority_baseline_f1", r.majority_f1},
                    {"evaluated", r.evaluated},
                    {"undetermined", r.undetermined},
                    {"scans", scans}});
  }
  json aggregate = json::object();
  for (const char* name : kMetricNames) {
    std::vector<double> values;
    for (const auto& r : reports) values.push_back(metric_value(r.metrics, name));
    if (values.empty()) continue;
    const auto ms = mean_std(values);
    aggregate[name] = {{"mean", ms.mean}, {"std", ms.std}};
  }
  aggregate["n_runs"] = reports.size();
  return {{"format_version", 1}, {"runs", runs}, {"aggregate", aggregate}};
}

std::string metrics_csv(std::span<const RunReport> reports) {
  std::string out = "strategy,seed,precision,recall,f1,specificity,tp,fp,fn,tn,evaluated,undetermined\n";
  for (const auto& r : reports) {
    const auto& m = r.metrics;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", r.strategy, r.seed, m.precision, m.recall, m.f1,
                       m.specificity, m.counts.tp, m.counts.fp, m.counts.fn, m.counts.tn, r.evaluated,
                       r.undetermined);
  }
  return out;
}

}  // namespace atriaqc

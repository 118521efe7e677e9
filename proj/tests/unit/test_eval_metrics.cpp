#include <doctest.h>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "atriaqc/eval_metrics.hpp"
#include "atriaqc/evaluation.hpp"
#include "atriaqc/phantom.hpp"
#include "test_util.hpp"

using namespace atriaqc;

namespace {

std::vector<int> random_bits(std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution b(0.5);
  std::vector<int> v(n);
  for (auto& x : v) x = b(rng);
  return v;
}

ScanRecord labeled(const std::string& id, int qa_raw, int mn = 3, int s = 3, int eat = 3) {
  ScanRecord r;
  r.scan_id = id;
  r.dims = {1, 1, 1};
  r.volume = {0.0f};
  r.raw_scores = RawScores{mn, s, eat, qa_raw};
  r.labels = binarize(*r.raw_scores);
  return r;
}

ScanPrediction prediction(std::vector<int> binary) {
  ScanPrediction p;
  for (std::size_t i = 0; i < binary.size(); ++i) {
    p.slices.push_back(std::int64_t(i));
    p.probs.push_back({});
  }
  p.binary = std::move(binary);
  return p;
}

}  // namespace

TEST_CASE("metrics of the worked example") {
  const auto m = metrics_from_counts({9, 3, 1, 7});
  CHECK(m.precision == doctest::Approx(0.75));
  CHECK(m.recall == doctest::Approx(0.9));
  CHECK(m.f1 == doctest::Approx(2 * 0.75 * 0.9 / 1.65));
  CHECK(m.f1 == doctest::Approx(0.8182).epsilon(1e-4));
  CHECK(m.specificity == doctest::Approx(0.7));
}

TEST_CASE("degenerate predictors") {
  const std::vector<int> labels = {1, 0, 1, 1, 0};
  const auto same = classification_metrics(labels, labels);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);
  CHECK(same.specificity == 1.0);

  const std::vector<int> ones(5, 1);
  const auto all_one = classification_metrics(ones, labels);
  CHECK(all_one.specificity == 0.0);
  CHECK(all_one.recall == 1.0);

  const std::vector<int> zeros(5, 0);
  const auto all_zero = classification_metrics(zeros, labels);
  CHECK(all_zero.precision == 0.0);
  CHECK(all_zero.precision_undefined);
  CHECK_FALSE(all_zero.recall_undefined);

  CHECK_ERROR_KIND(classification_metrics(std::vector<int>{1, 0}, labels), ErrorKind::Shape);
}

TEST_CASE("confusion counts match brute force on random vectors") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = len(rng);
    const auto preds = random_bits(n, rng);
    const auto labels = random_bits(n, rng);
    const auto want = oracle::confusion(preds, labels);
    const auto got = classification_metrics(preds, labels);
    CHECK(got.counts == ConfusionCounts{want.tp, want.fp, want.fn, want.tn});
    if (want.tp + want.fp > 0) CHECK(got.precision == double(want.tp) / double(want.tp + want.fp));
    if (want.tp + want.fn > 0) CHECK(got.recall == double(want.tp) / double(want.tp + want.fn));
    if (want.tn + want.fp > 0) CHECK(got.specificity == double(want.tn) / double(want.tn + want.fp));
  }
}

TEST_CASE("mode aggregation") {
  CHECK(aggregate_mode(std::vector<int>{1, 1, 0}) == 1);
  CHECK(aggregate_mode(std::vector<int>{1, 0}) == 0);
  CHECK(aggregate_mode(std::vector<int>{0, 0, 0, 0}) == 0);
  CHECK(aggregate_mode(std::vector<int>{1}) == 1);
  CHECK_ERROR_KIND(aggregate_mode(std::vector<int>{}), ErrorKind::Undetermined);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto v = random_bits(7, rng);
    const int before = aggregate_mode(v);
    std::shuffle(v.begin(), v.end(), rng);
    CHECK(aggregate_mode(v) == before);
  }
}

TEST_CASE("pearson values and invariances") {
  const std::vector<double> x = {1, 2, 3, 4}, y = {1, 3, 2, 4};
  CHECK(std::abs(pearson(x, y) - 0.8) <= 1e-12);
  CHECK(std::abs(pearson(x, x) - 1.0) <= 1e-12);
  std::vector<double> neg(x.size());
  std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
  CHECK(std::abs(pearson(x, neg) + 1.0) <= 1e-12);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> scale(0.1, 10), shift(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(20), b(20);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = n(rng);
      b[i] = a[i] + n(rng);
    }
    const double r = pearson(a, b);
    CHECK(std::abs(r - oracle::pearson(a, b)) <= 1e-12);
    const double s = scale(rng), t = shift(rng);
    std::vector<double> a2(a.size());
    std::transform(a.begin(), a.end(), a2.begin(), [&](double v) { return s * v + t; });
    CHECK(std::abs(pearson(a2, b) - r) <= 1e-12);
  }

  CHECK_ERROR_KIND(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), ErrorKind::Domain);
  CHECK_ERROR_KIND(pearson(std::vector<double>{1}, std::vector<double>{1}), ErrorKind::Domain);
  CHECK_ERROR_KIND(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), ErrorKind::Domain);
}

TEST_CASE("majority baseline and mean/std") {
  CHECK(majority_baseline_f1(std::vector<int>{1, 1, 1, 0}) == doctest::Approx(2 * 0.75 / 1.75));
  CHECK(majority_baseline_f1(std::vector<int>{0, 0, 1}) == 0.0);
  const auto ms = mean_std(std::vector<double>{1, 2, 3});
  CHECK(ms.mean == 2.0);
  CHECK(ms.std == doctest::Approx(1.0));
  CHECK(mean_std(std::vector<double>{4}).std == 0.0);
}

TEST_CASE("scan-level evaluation excludes undetermined scans") {
  const std::vector<ScanRecord> scans = {labeled("a", 4), labeled("b", 1), labeled("c", 5), labeled("d", 2)};
  const std::vector<ScanPrediction> preds = {prediction({1, 1, 0}), prediction({1, 0}), prediction({}),
                                             prediction({0, 0})};
  const auto report = evaluate_predictions(scans, preds, "baseline", 3);
  CHECK(report.evaluated == 3);
  CHECK(report.undetermined == 1);
  CHECK(report.metrics.counts == ConfusionCounts{1, 0, 0, 2});
  CHECK(report.metrics.f1 == 1.0);
  CHECK_FALSE(report.scans[2].prediction.has_value());
  CHECK(report.scans[0].positive_slices == 2);

  const std::vector<RunReport> runs = {report, evaluate_predictions(scans, preds, "baseline", 4)};
  CHECK(metrics_json(runs).dump() == metrics_json(runs).dump());
  const auto j = metrics_json(runs);
  CHECK(j["aggregate"]["f1"]["mean"].get<double>() == 1.0);
  CHECK(j["aggregate"]["n_runs"].get<int>() == 2);
  const auto csv = metrics_csv(runs);
  CHECK(csv.rfind("strategy,seed,precision,recall,f1,specificity,tp,fp,fn,tn,evaluated,undetermined\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("pearson table on a coupled phantom") {
  PhantomConfig c;
  c.n_scans = 120;
  c.attribute_coupling = 0.75;
  c.seed = 21;
  std::vector<ScanRecord> scans;
  for (int i = 0; i < c.n_scans; ++i) {
    const auto raw = phantom_scores(c, i);
    scans.push_back(labeled("p" + std::to_string(i), raw.qa, raw.mn, raw.s, raw.eat));
  }
  const auto table = pearson_table(scans);
  CHECK(table.n_scans == 120);
  for (const char* key : {"mn", "s", "eat"}) {
    const auto r = table.matrix.at(key).at("qa");
    REQUIRE(r.has_value());
    CHECK(*r >= 0.6);
    CHECK(*r <= 0.9);
  }
  CHECK(*table.matrix.at("qa").at("qa") == doctest::Approx(1.0));
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "atriaqc/losses.hpp"
#include "test_util.hpp"

using namespace atriaqc;

namespace {

torch::Tensor random_labels(std::int64_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  auto t = torch::empty({n}, torch::kLong);
  for (std::int64_t i = 0; i < n; ++i) t[i] = pick(rng);
  return t;
}

std::vector<int> to_ints(const torch::Tensor& t) {
  std::vector<int> v;
  for (std::int64_t i = 0; i < t.size(0); ++i) v.push_back(t[i].item<int>());
  return v;
}

ContrastiveBatch random_batch(std::int64_t n, std::int64_t dim, std::mt19937_64& rng) {
  ContrastiveBatch b;
  b.embeddings = testutil::random_unit_rows(2 * n, dim, rng);
  for (auto a : kAllAttributes) b.labels[a] = random_labels(2 * n, 2, rng);
  b.temperature = 0.5;
  return b;
}

}  // namespace

TEST_CASE("supcon matches the double-loop oracle") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> tau(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t n = 2 * size(rng);
    const auto z = testutil::random_unit_rows(n, 6, rng);
    const auto labels = random_labels(n, 3, rng);
    const double t = tau(rng);
    for (bool mean : {false, true}) {
      const double got =
          supcon_loss(z, labels, t, mean ? AnchorReduction::Mean : AnchorReduction::Sum).item<double>();
      const double want = oracle::supcon(testutil::to_matrix(z), to_ints(labels), t, mean);
      if (want == 0.0) {
        CHECK(got == 0.0);
      } else {
        CHECK(testutil::rel_err(got, want) <= 1e-6);
      }
    }
  }
}

TEST_CASE("supcon of identical embeddings with one label is 4 ln 3") {
  for (double tau : {0.07, 0.5, 1.0}) {
    auto z = torch::zeros({4, 5}, torch::kDouble);
    z.index_put_({torch::indexing::Slice(), 0}, 1.0);
    const auto labels = torch::zeros({4}, torch::kLong);
    CHECK(std::abs(supcon_loss(z, labels, tau).item<double>() - 4 * std::log(3.0)) <= 1e-6);
  }
}

TEST_CASE("supcon anchors without positives contribute zero") {
  std::mt19937_64 rng(5);
  const auto z = testutil::random_unit_rows(4, 3, rng);
  SupConStats stats;
  const auto labels = torch::tensor({0, 1, 2, 3}, torch::kLong);
  CHECK(supcon_loss(z, labels, 0.1, AnchorReduction::Sum, &stats).item<double>() == 0.0);
  CHECK(stats.anchors == 4);
  CHECK(stats.anchors_without_positive == 4);

  stats = {};
  const auto partial = torch::tensor({0, 0, 1, 2}, torch::kLong);
  const double got = supcon_loss(z, partial, 0.1, AnchorReduction::Sum, &stats).item<double>();
  CHECK(stats.anchors_without_positive == 2);
  CHECK(testutil::rel_err(got, oracle::supcon(testutil::to_matrix(z), {0, 0, 1, 2}, 0.1)) <= 1e-9);
}

TEST_CASE("supcon is invariant under row permutation and rotation") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = testutil::random_unit_rows(10, 6, rng);
    const auto labels = random_labels(10, 3, rng);
    const double base = supcon_loss(z, labels, 0.2).item<double>();

    std::vector<std::int64_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto idx = torch::tensor(perm, torch::kLong);
    CHECK(std::abs(supcon_loss(z.index_select(0, idx), labels.index_select(0, idx), 0.2).item<double>() - base) <=
          1e-6 * std::max(1.0, std::abs(base)));

    const auto q = std::get<0>(torch::linalg_qr(torch::randn({6, 6}, torch::kDouble)));
    CHECK(std::abs(supcon_loss(torch::matmul(z, q), labels, 0.2).item<double>() - base) <=
          1e-5 * std::max(1.0, std::abs(base)));
  }
}

TEST_CASE("supcon depends on z only through the scaled Gram matrix") {
  std::mt19937_64 rng(17);
  const auto z = testutil::random_unit_rows(8, 4, rng);
  const auto labels = random_labels(8, 2, rng);
  const double a = supcon_loss(z, labels, 0.3).item<double>();
  const double b = supcon_loss(z * 2.0, labels, 1.2).item<double>();
  CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(a)));
}

TEST_CASE("supcon gradient matches central differences") {
  std::mt19937_64 rng(23);
  const auto z0 = testutil::random_unit_rows(4, 8, rng);
  const auto labels = torch::tensor({0, 0, 1, 1}, torch::kLong);
  const double tau = 0.5;

  auto z = z0.clone().requires_grad_(true);
  supcon_loss(z, labels, tau).backward();
  const auto analytic = z.grad().reshape({-1});

  const auto flat0 = z0.reshape({-1});
  std::vector<double> x(flat0.data_ptr<double>(), flat0.data_ptr<double>() + flat0.numel());
  auto f = [&](const std::vector<double>& v) {
    const auto t = torch::tensor(v, torch::kDouble).reshape({4, 8});
    return supcon_loss(t, labels, tau).item<double>();
  };
  const auto numeric = oracle::central_gradient(f, x, 1e-5);
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff += std::pow(analytic[std::int64_t(i)].item<double>() - numeric[i], 2);
    norm += numeric[i] * numeric[i];
  }
  CHECK(std::sqrt(diff) / std::sqrt(norm) <= 1e-4);
}

TEST_CASE("combined supcon is the sum of the four partitions") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto batch = random_batch(4, 5, rng);
    double sum = 0;
    for (auto a : kAllAttributes) sum += supcon_loss(batch, a).item<double>();
    CHECK(std::abs(combined_supcon_loss(batch).item<double>() - sum) <= 1e-9);
  }

  auto same = random_batch(3, 4, rng);
  for (auto a : kAllAttributes) same.labels[a] = same.labels[Attribute::MyocardiumNulling];
  const double single = supcon_loss(same, Attribute::MyocardiumNulling).item<double>();
  CHECK(combined_supcon_loss(same).item<double>() == doctest::Approx(4 * single).epsilon(1e-12));

  auto missing = random_batch(2, 4, rng);
  missing.labels.erase(Attribute::Sharpness);
  CHECK_ERROR_KIND(combined_supcon_loss(missing), ErrorKind::Config);

  auto unnormalized = random_batch(2, 4, rng);
  unnormalized.embeddings = unnormalized.embeddings * 1.1;
  CHECK_ERROR_KIND(unnormalized.validate(), ErrorKind::Domain);
}

TEST_CASE("supcon stays finite for extreme temperatures") {
  std::mt19937_64 rng(41);
  const auto z = testutil::random_unit_rows(6, 3, rng).to(torch::kFloat);
  const auto labels = torch::tensor({0, 0, 1, 1, 0, 1}, torch::kLong);
  CHECK(std::isfinite(supcon_loss(z, labels, 1e-4).item<double>()));
}

TEST_CASE("dice loss reference values") {
  for (int k : {1, 10, 100}) {
    auto m = torch::zeros({1, 40, 40}, torch::kDouble);
    m.view({-1}).narrow(0, 0, k).fill_(1);
    const double loss = dice_loss(m, m).item<double>();
    CHECK(loss >= 0);
    CHECK(loss <= 1.0 / (2 * k + 1) + 1e-15);
  }

  auto a = torch::zeros({1, 40, 40}, torch::kDouble);
  auto b = torch::zeros({1, 40, 40}, torch::kDouble);
  a.view({-1}).narrow(0, 0, 100).fill_(1);
  b.view({-1}).narrow(0, 200, 100).fill_(1);
  CHECK(std::abs(dice_loss(a, b).item<double>() - (1.0 - 1.0 / 201.0)) <= 1e-9);

  const auto empty = torch::zeros({2, 8, 8}, torch::kDouble);
  CHECK(dice_loss(empty, empty).item<double>() == 0.0);

  CHECK_ERROR_KIND(dice_loss(torch::zeros({1, 4}), torch::zeros({1, 5})), ErrorKind::Shape);
}

TEST_CASE("dice loss matches the per-sample oracle") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const auto masks = (torch::rand({3, 36}, torch::kDouble) > 0.6).to(torch::kDouble);
    const auto probs = torch::rand({3, 36}, torch::kDouble);
    const double want = oracle::dice(testutil::to_matrix(masks), testutil::to_matrix(probs));
    CHECK(std::abs(dice_loss(masks.reshape({3, 6, 6}), probs.reshape({3, 6, 6})).item<double>() - want) <= 1e-12);
  }
}

TEST_CASE("qa bce reference values") {
  const auto half = torch::full({5, 4}, 0.5, torch::kDouble);
  CHECK(std::abs(qa_bce_loss(torch::randint(0, 2, {5, 4}).to(torch::kDouble), half).item<double>() - std::log(2.0)) <=
        1e-9);

  for (int trial = 0; trial < 50; ++trial) {
    const auto t = torch::randint(0, 2, {6, 4}).to(torch::kDouble);
    auto p = torch::rand({6, 4}, torch::kDouble);
    p[0][0] = 0.0;
    p[1][1] = 1.0;
    const double want = oracle::bce(testutil::to_matrix(t), testutil::to_matrix(p));
    CHECK(std::abs(qa_bce_loss(t, p).item<double>() - want) <= 1e-9);
  }

  const auto targets = torch::tensor({{1.0, 0.0, 1.0, 0.0}}, torch::kDouble);
  const auto near = torch::tensor({{0.9999, 0.0001, 0.9999, 0.0001}}, torch::kDouble);
  const double small = qa_bce_loss(targets, near).item<double>();
  CHECK(small > 0);
  CHECK(small < 2e-4);
  CHECK(std::isfinite(qa_bce_loss(targets, 1.0 - targets).item<double>()));

  CHECK_ERROR_KIND(qa_bce_loss(torch::zeros({2, 3}), torch::zeros({2, 3})), ErrorKind::Shape);
}

TEST_CASE("multitask loss is the plain sum") {
  CHECK(multitask_loss(torch::tensor(0.7), torch::tensor(0.2)).item<double>() == doctest::Approx(0.9));
  CHECK(multitask_loss(torch::tensor(0.4), torch::tensor(0.0)).item<double>() == doctest::Approx(0.4));

  torch::manual_seed(3);
  auto w = torch::randn({4}, torch::kDouble).requires_grad_(true);
  const auto x = torch::randn({3, 4}, torch::kDouble);
  const auto targets = torch::tensor({{1.0, 0.0, 1.0, 1.0}, {0.0, 0.0, 1.0, 0.0}, {1.0, 1.0, 0.0, 0.0}},
                                     torch::kDouble);
  const auto masks = (torch::rand({3, 4}, torch::kDouble) > 0.5).to(torch::kDouble);
  auto total = [&](const torch::Tensor& v) {
    const auto preds = torch::sigmoid(x * v);
    return multitask_loss(qa_bce_loss(targets, preds), dice_loss(masks, preds));
  };
  total(w).backward();
  std::vector<double> w0(w.data_ptr<double>(), w.data_ptr<double>() + 4);
  const auto numeric = oracle::central_gradient(
      [&](const std::vector<double>& v) { return total(torch::tensor(v, torch::kDouble)).item<double>(); }, w0, 1e-6);
  for (int i = 0; i < 4; ++i) CHECK(w.grad()[i].item<double>() == doctest::Approx(numeric[std::size_t(i)]).epsilon(1e-6));
}

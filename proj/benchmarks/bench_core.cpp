#include <benchmark/benchmark.h>

#include <torch/torch.h>

#include "atriaqc/losses.hpp"
#include "atriaqc/nets.hpp"
#include "atriaqc/optim.hpp"
#include "atriaqc/phantom.hpp"
#include "oracles.hpp"

using namespace atriaqc;

namespace {

torch::Tensor unit_rows(std::int64_t n, std::int64_t dim) {
  const auto z = torch::randn({n, dim});
  return z / z.norm(2, 1, true);
}

void BM_SupconVectorized(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto n = state.range(0);
  const auto z = unit_rows(n, 128);
  const auto labels = torch::randint(0, 2, {n}, torch::kLong);
  for (auto _ : state) benchmark::DoNotOptimize(supcon_loss(z, labels, 0.07).item<float>());
  state.SetComplexityN(n);
}
BENCHMARK(BM_SupconVectorized)->RangeMultiplier(2)->Range(16, 1024)->Complexity();

void BM_SupconLoopOracle(benchmark::State& state) {
  const auto n = state.range(0);
  const auto z = unit_rows(n, 128).to(torch::kDouble);
  oracle::Matrix m(std::size_t(n), std::vector<double>(128));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < 128; ++j) m[std::size_t(i)][std::size_t(j)] = z[i][j].item<double>();
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = int(i % 2);
  for (auto _ : state) benchmark::DoNotOptimize(oracle::supcon(m, labels, 0.07));
  state.SetComplexityN(n);
}
BENCHMARK(BM_SupconLoopOracle)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_DiceLoss(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto m = (torch::rand({32, 1, 128, 128}) > 0.8).to(torch::kFloat);
  const auto p = torch::rand({32, 1, 128, 128});
  for (auto _ : state) benchmark::DoNotOptimize(dice_loss(m, p).item<float>());
}
BENCHMARK(BM_DiceLoss);

void BM_EncoderForward(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto side = state.range(0);
  ResidualEncoder encoder(3, 8, std::array<int, 4>{1, 1, 1, 1});
  encoder->eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({8, 3, side, side});
  for (auto _ : state) benchmark::DoNotOptimize(encoder->forward(x).pooled.sum().item<float>());
}
BENCHMARK(BM_EncoderForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_LarsStep(benchmark::State& state) {
  torch::set_num_threads(1);
  std::vector<torch::Tensor> w, g, v;
  for (int i = 0; i < 20; ++i) {
    w.push_back(torch::randn({256, 256}));
    g.push_back(torch::randn({256, 256}) * 1e-3);
    v.push_back(torch::zeros({256, 256}));
  }
  const LarsConfig config;
  for (auto _ : state) lars_step(w, g, v, config);
}
BENCHMARK(BM_LarsStep)->Unit(benchmark::kMillisecond);

void BM_PhantomScan(benchmark::State& state) {
  PhantomConfig config;
  config.dims = {24, state.range(0), state.range(0)};
  config.n_scans = 1;
  for (auto _ : state) benchmark::DoNotOptimize(generate_scan(config, 0).volume.data());
}
BENCHMARK(BM_PhantomScan)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

// Serial reference kernels against their OpenMP counterparts. Sizes follow
// the shapes the model actually runs: 256 to 1024 points, 64 to 128 channels.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pt/kernels.hpp"
#include "pt/pointcloud.hpp"

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

pt::PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  const auto xyz = random_floats(n * 3, seed);
  pt::PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) pc.points.push_back({xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]});
  pc.normalized = true;
  return pc;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 128, k = 64;
  const auto a = random_floats(m * k, 1);
  const auto b = random_floats(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      pt::kernels::gemm_nn(m, n, k, a.data(), b.data(), c.data(), false);
    else
      pt::kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * m * n * k));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  // Attention-shaped: one row of `len` scores per query point.
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto x = random_floats(len * len, 3);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      pt::kernels::softmax_forward(len, len, 1, x.data(), y.data());
    else
      pt::kernels::serial::softmax_forward(len, len, 1, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len * len));
}

template <bool Parallel>
void BM_Knn(benchmark::State& state) {
  const auto pc = random_cloud(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) {
    auto idx = Parallel ? pt::knn_indices(pc, 16) : pt::serial::knn_indices(pc, 16);
    benchmark::DoNotOptimize(idx.data());
  }
}

template <bool Parallel>
void BM_Fps(benchmark::State& state) {
  const auto pc = random_cloud(static_cast<std::size_t>(state.range(0)), 5);
  const std::size_t keep = pc.size() / 4;
  for (auto _ : state) {
    auto idx = Parallel ? pt::farthest_point_indices(pc, keep, 7)
                        : pt::serial::farthest_point_indices(pc, keep, 7);
    benchmark::DoNotOptimize(idx.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_Knn<false>)->Name("knn/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_Knn<true>)->Name("knn/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_Fps<false>)->Name("fps/serial")->Arg(1024)->Arg(4096);
BENCHMARK(BM_Fps<true>)->Name("fps/parallel")->Arg(1024)->Arg(4096);

BENCHMARK_MAIN();

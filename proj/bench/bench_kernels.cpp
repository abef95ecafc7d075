// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP GEMM kernels at model-relevant sizes.
#include <benchmark/benchmark.h>

#include <vector>

#include "dlf/kernels.hpp"
#include "dlf/rng.hpp"

namespace {

using Kernel = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t,
                        std::size_t, std::size_t);

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  dlf::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// rows = tokens in a batch, k = p = width. The Aᵀ·B kernel reads an m×d B
// and writes a d×d C; the other two read d×d and write m×d.
template <Kernel K, bool kTransposedA = false>
void run(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto a = random_values(m * d, 1);
  const auto b = random_values((kTransposedA ? m : d) * d, 2);
  std::vector<double> c((kTransposedA ? d : m) * d);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    K(a, b, c, m, d, d);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * d * d));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (auto m : {48, 192, 768})
    for (auto d : {64, 256}) b->Args({m, d});
}

}  // namespace

BENCHMARK(run<dlf::kernels::gemm_serial>)->Name("gemm/serial")->Apply(sizes);
BENCHMARK(run<dlf::kernels::gemm>)->Name("gemm/openmp")->Apply(sizes);
BENCHMARK(run<dlf::kernels::gemm_a_bt_serial>)->Name("gemm_a_bt/serial")->Apply(sizes);
BENCHMARK(run<dlf::kernels::gemm_a_bt>)->Name("gemm_a_bt/openmp")->Apply(sizes);
BENCHMARK(run<dlf::kernels::gemm_at_b_serial, true>)->Name("gemm_at_b/serial")->Apply(sizes);
BENCHMARK(run<dlf::kernels::gemm_at_b, true>)->Name("gemm_at_b/openmp")->Apply(sizes);

BENCHMARK_MAIN();

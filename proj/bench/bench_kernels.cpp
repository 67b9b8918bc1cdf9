// serial vs OpenMP kernel comparison
#include "vp/kernels.hpp"
#include "vp/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

std::vector<vp::real> random_buf(std::size_t n, uint64_t seed) {
  vp::Rng rng(seed);
  std::vector<vp::real> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void bm_matmul_serial(benchmark::State& state) {
  const int64_t n = state.range(0);
  const auto a = random_buf(std::size_t(n * n), 1);
  const auto b = random_buf(std::size_t(n * n), 2);
  std::vector<vp::real> c(static_cast<std::size_t>(n * n));
  for (auto _ : state) {
    vp::kernels::matmul_serial(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
}

void bm_matmul_omp(benchmark::State& state) {
  const int64_t n = state.range(0);
  const auto a = random_buf(std::size_t(n * n), 1);
  const auto b = random_buf(std::size_t(n * n), 2);
  std::vector<vp::real> c(static_cast<std::size_t>(n * n));
  for (auto _ : state) {
    vp::kernels::matmul_omp(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
}

void bm_gelu_serial(benchmark::State& state) {
  const int64_t n = state.range(0);
  const auto x = random_buf(std::size_t(n), 3);
  std::vector<vp::real> y(static_cast<std::size_t>(n));
  for (auto _ : state) {
    vp::kernels::gelu_serial(x.data(), y.data(), n);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_gelu_omp(benchmark::State& state) {
  const int64_t n = state.range(0);
  const auto x = random_buf(std::size_t(n), 3);
  std::vector<vp::real> y(static_cast<std::size_t>(n));
  for (auto _ : state) {
    vp::kernels::gelu_omp(x.data(), y.data(), n);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(bm_matmul_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul_omp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_gelu_serial)->Arg(1 << 14)->Arg(1 << 18);
BENCHMARK(bm_gelu_omp)->Arg(1 << 14)->Arg(1 << 18);

BENCHMARK_MAIN();

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "bapriv/kernels.hpp"
#include "bapriv/projection.hpp"
#include "bapriv/rng.hpp"

namespace {

using bapriv::Matrix;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  bapriv::Rng rng(seed);
  Matrix m(rows, cols);
  for (auto& v : m.flat()) v = rng.uniform(-1.0, 1.0);
  return m;
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1);
  const Matrix b = random_matrix(n, n, 2);
  Matrix out(n, n);
  for (auto _ : state) {
    Kernel(a, b, out);
    benchmark::DoNotOptimize(out.flat().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <void (*Kernel)(const Matrix&, const Matrix&, double, Matrix&)>
void bm_project(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const Matrix samples = random_matrix(m, 24, 3);
  const auto r = bapriv::sample_matrix(20, 24, 3.0, 4);
  const Matrix proj = r.as_matrix();
  const double scale = bapriv::projection_scale(r);
  Matrix out(m, 20);
  for (auto _ : state) {
    Kernel(samples, proj, scale, out);
    benchmark::DoNotOptimize(out.flat().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(m));
}

BENCHMARK(bm_matmul<bapriv::kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<bapriv::kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<bapriv::kernels::serial::matmul_at_b>)->Name("matmul_at_b/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<bapriv::kernels::parallel::matmul_at_b>)->Name("matmul_at_b/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_project<bapriv::kernels::serial::project_rows>)->Name("project_rows/serial")->Arg(240)->Arg(10000);
BENCHMARK(bm_project<bapriv::kernels::parallel::project_rows>)->Name("project_rows/parallel")->Arg(240)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();

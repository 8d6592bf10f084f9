// Serial references against the OpenMP kernels.
//   ./bench/kerrsf_bench --benchmark_filter=Resolvent

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "kerrsf/dynamics.hpp"
#include "kerrsf/kernels.hpp"
#include "kerrsf/spectrum.hpp"

using namespace kerrsf;

namespace {

CMatrix generator(int d) {
  CollectiveModelParams p;
  p.delta = 0.1;
  p.rabi = 0.16;
  p.kerr = 0.45;
  p.gamma = 0.22;
  p.fock_dim = d;
  return build_liouvillian(p).generator();
}

std::vector<ResolventTerm> terms(Eigen::Index n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  ResolventTerm t{CVector(n), CVector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    t.left(i) = Complex(g(rng), g(rng));
    t.right(i) = Complex(g(rng), g(rng));
  }
  return {t};
}

std::vector<double> shifts(std::size_t points) { return uniform_grid(0.05, 1.5, points); }

void BM_ResolventReference(benchmark::State& state) {
  const CMatrix g = generator(static_cast<int>(state.range(0)));
  const auto t = terms(g.rows());
  const auto s = shifts(64);
  for (auto _ : state) benchmark::DoNotOptimize(resolvent_reference(g, s, t));
}

void BM_ResolventSchur(benchmark::State& state) {
  const CMatrix g = generator(static_cast<int>(state.range(0)));
  const auto t = terms(g.rows());
  const auto s = shifts(64);
  for (auto _ : state) benchmark::DoNotOptimize(ShiftedResolvent(g).evaluate(s, t));
}

void BM_ResolventSparse(benchmark::State& state) {
  const CMatrix g = generator(static_cast<int>(state.range(0)));
  const SparseCMatrix sg = g.sparseView();
  const auto t = terms(g.rows());
  const auto s = shifts(64);
  for (auto _ : state) benchmark::DoNotOptimize(sparse_resolvent(sg, s, t));
}

std::vector<double> bump(const std::vector<double>& grid) {
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) v[k] = std::exp(-grid[k] * grid[k] / 0.1);
  return v;
}

void BM_ConvolveReference(benchmark::State& state) {
  const auto grid = uniform_grid(-1.5, 1.5, static_cast<std::size_t>(state.range(0)));
  const auto v = bump(grid);
  for (auto _ : state) benchmark::DoNotOptimize(lorentzian_convolve_reference(grid, v, 0.0107));
}

void BM_ConvolveParallel(benchmark::State& state) {
  const auto grid = uniform_grid(-1.5, 1.5, static_cast<std::size_t>(state.range(0)));
  const auto v = bump(grid);
  for (auto _ : state) benchmark::DoNotOptimize(lorentzian_convolve(grid, v, 0.0107));
}

}  // namespace

BENCHMARK(BM_ResolventReference)->Arg(6)->Arg(10)->Arg(14)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResolventSchur)->Arg(6)->Arg(10)->Arg(14)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ResolventSparse)->Arg(6)->Arg(10)->Arg(14)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ConvolveReference)->Arg(301)->Arg(2001)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvolveParallel)->Arg(301)->Arg(2001)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();

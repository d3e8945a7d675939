#include <cmath>
#include <numbers>
#include <random>

#include <benchmark/benchmark.h>

#include "darcygp/dense_gp.hpp"
#include "darcygp/fastgp.hpp"
#include "darcygp/random_field.hpp"

using namespace darcygp;

namespace {

constexpr int kDims = 9;

const qmc::LatticeGenerator& generator() {
  static const auto gen = qmc::LatticeGenerator().truncated(kDims);
  return gen;
}

fastgp::PeriodicKernel kernel() {
  std::vector<double> w(kDims);
  for (int j = 0; j < kDims; ++j) w[j] = 0.9 / (1.0 + j);
  return {4, w, 1.3};
}

const fastgp::FastGpModel& model() {
  static const fastgp::FastGpModel m = [] {
    const std::size_t n = 1024;
    const auto x = qmc::lattice_points(generator(), n, kDims);
    Eigen::VectorXd y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) y[i] = std::sin(2.0 * std::numbers::pi * x(i, 0)) + x(i, 1);
    return fastgp::FastGpModel(generator(), n, y, kernel(), 1e-4);
  }();
  return m;
}

const qmc::PointSet& queries() {
  static const qmc::PointSet q = qmc::lattice_points(qmc::random_shift(generator(), 3), 4096, kDims);
  return q;
}

void BM_NodeCovariance(benchmark::State& state) {
  const Mesh mesh(static_cast<int>(state.range(0)), 200.0);
  const bool parallel = state.range(1);
  for (auto _ : state)
    benchmark::DoNotOptimize(parallel ? field::node_covariance({}, mesh) : field::serial::node_covariance({}, mesh));
}
BENCHMARK(BM_NodeCovariance)->ArgNames({"d", "parallel"})->ArgsProduct({{32}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_GramMatrix(benchmark::State& state) {
  const auto x = qmc::lattice_points(generator(), static_cast<std::size_t>(state.range(0)), kDims);
  const auto k = kernel();
  const bool parallel = state.range(1);
  for (auto _ : state)
    benchmark::DoNotOptimize(parallel ? fastgp::gram_matrix(k, x) : fastgp::serial::gram_matrix(k, x));
}
BENCHMARK(BM_GramMatrix)->ArgNames({"n", "parallel"})->ArgsProduct({{1024}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_KernelColumn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = kernel();
  const bool parallel = state.range(1);
  for (auto _ : state)
    benchmark::DoNotOptimize(parallel ? fastgp::kernel_column(k, generator(), n)
                                      : fastgp::serial::kernel_column(k, generator(), n));
}
BENCHMARK(BM_KernelColumn)->ArgNames({"n", "parallel"})->ArgsProduct({{1 << 16}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_PosteriorMean(benchmark::State& state) {
  const auto& m = model();
  const bool parallel = state.range(0);
  for (auto _ : state)
    benchmark::DoNotOptimize(parallel ? m.posterior_mean(queries()) : fastgp::serial::posterior_mean(m, queries()));
}
BENCHMARK(BM_PosteriorMean)->ArgNames({"parallel"})->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_PosteriorVariance(benchmark::State& state) {
  const auto& m = model();
  const bool parallel = state.range(0);
  for (auto _ : state)
    benchmark::DoNotOptimize(parallel ? m.posterior_variance(queries())
                                      : fastgp::serial::posterior_variance(m, queries()));
}
BENCHMARK(BM_PosteriorVariance)->ArgNames({"parallel"})->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

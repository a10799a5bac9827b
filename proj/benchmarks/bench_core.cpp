#include <benchmark/benchmark.h>

#include <random>

#include "lowrank/dynamics.hpp"
#include "lowrank/flow_oracle.hpp"
#include "lowrank/problem.hpp"

using namespace lowrank;

namespace {

std::vector<double> ladder(int d) {
  std::vector<double> s(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) s[static_cast<std::size_t>(i)] = static_cast<double>(d - i);
  return s;
}

FactorState start(const ProblemInstance& inst) {
  const FactorPair f = init_factors(inst.m, inst.n, inst.d, InitSpec{0.1, 0, 300.0});
  return FactorState::from_full(f.U, f.V, inst.d);
}

}  // namespace

static void BM_BlockStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const auto inst = make_instance(m, m, d, ladder(d));
  FactorState s = start(inst);
  for (auto _ : state) {
    s = gd_step_blocks(s, inst, 1e-3);
    benchmark::DoNotOptimize(s.U.data());
  }
}
BENCHMARK(BM_BlockStep)->Args({2, 20})->Args({6, 50});

static void BM_FullStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const auto inst = make_instance(m, m, d, ladder(d));
  const Matrix sigma = assemble_full_sigma(inst);
  FactorPair f = init_factors(m, m, d, InitSpec{0.1, 0, 300.0});
  for (auto _ : state) {
    f = gd_step_full(f.U, f.V, sigma, 1e-3);
    benchmark::DoNotOptimize(f.U.data());
  }
}
BENCHMARK(BM_FullStep)->Args({2, 20})->Args({6, 50});

static void BM_Diagnostics(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const auto inst = make_instance(m, m, d, ladder(d));
  const FactorState s = start(inst);
  for (auto _ : state) benchmark::DoNotOptimize(diagnostics(s, inst));
}
BENCHMARK(BM_Diagnostics)->Args({2, 20})->Args({6, 50});

static void BM_GramFlowRk4(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Matrix sigma = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) sigma(i, i) = d - i;
  const Matrix S0 = 0.01 * Matrix::Identity(d, d);
  for (auto _ : state) benchmark::DoNotOptimize(integrate_gram_flow(sigma, S0, 1.0, 1e-3));
}
BENCHMARK(BM_GramFlowRk4)->Arg(2)->Arg(6);

static void BM_ClosedFormS(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Matrix sigma = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) sigma(i, i) = d - i;
  const ClosedFormInputs in = make_closed_form_inputs(sigma, 0.01 * Matrix::Identity(d, d));
  for (auto _ : state) benchmark::DoNotOptimize(closed_form_S(in, 1.0));
}
BENCHMARK(BM_ClosedFormS)->Arg(2)->Arg(6);
BENCHMARK_MAIN();

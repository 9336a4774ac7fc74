#include <benchmark/benchmark.h>

#include <random>

#include "chainctl/chain_dynamics.hpp"
#include "chainctl/lie_engine.hpp"
#include "chainctl/linearization.hpp"
#include "chainctl/time_optimal.hpp"

using namespace chainctl;

namespace {

ChainState random_state(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  std::vector<double> q(n), p(n);
  for (auto& v : q) v = g(rng);
  for (auto& v : p) v = g(rng);
  return {q, p};
}

void BM_AdChain(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const ControlAffineField field(n, PotentialModel::toda());
  const VectorField f = drift_vector_field(field);
  const VectorField g = control_vector_field(field, Channel::u);
  const Eigen::VectorXd x = random_state(n, 1).to_vector();
  for (auto _ : st) benchmark::DoNotOptimize(ad_chain(f, g, x, 2 * n));
}
BENCHMARK(BM_AdChain)->DenseRange(2, 5)->Unit(benchmark::kMicrosecond);

void BM_RankProfile(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const ChainState x = random_state(n, 2);
  for (auto _ : st) benchmark::DoNotOptimize(delta_rank_profile(x, PotentialModel::toda()));
}
BENCHMARK(BM_RankProfile)->DenseRange(2, 5)->Unit(benchmark::kMicrosecond);

void BM_Simulate(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const ControlAffineField field(n, PotentialModel::toda());
  const ChainState x0 = random_state(n, 3);
  SimulationOptions so;
  so.step = 1e-3;
  for (auto _ : st) benchmark::DoNotOptimize(simulate(field, x0, ControlSignal::constant(0.3, -0.2), 10.0, so));
  st.SetItemsProcessed(st.iterations() * 10000);
}
BENCHMARK(BM_Simulate)->Arg(2)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_FlatCoordinates(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const ChainState x = random_state(n, 4);
  const auto pot = PotentialModel::toda();
  for (auto _ : st) benchmark::DoNotOptimize(flat_coordinates(x, pot));
}
BENCHMARK(BM_FlatCoordinates)->DenseRange(2, 5)->Unit(benchmark::kMicrosecond);

void BM_SteerFlat(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const ChainState x0 = random_state(n, 5);
  ChainState x1 = x0;
  x1.q[0] += 0.3;
  for (auto _ : st) benchmark::DoNotOptimize(steer_flat(x0, x1, 5.0, PotentialModel::toda()));
}
BENCHMARK(BM_SteerFlat)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_MinTimeSingle(benchmark::State& st) {
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        solve_min_time(ChainState::at_rest({0.0}), ChainState::at_rest({1.0}), 1.0, PotentialModel::toda()));
  }
}
BENCHMARK(BM_MinTimeSingle)->Unit(benchmark::kMillisecond);

void BM_MinTimePair(benchmark::State& st) {
  const ChainState x0 = ChainState::at_rest({0.0, 1.0});
  const ChainState x1({0.3, 1.2}, {0.1, -0.1});
  for (auto _ : st) benchmark::DoNotOptimize(solve_min_time(x0, x1, 1.0, PotentialModel::toda()));
}
BENCHMARK(BM_MinTimePair)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();

// Serial reference vs OpenMP paths for the three hot kernels.
#include <benchmark/benchmark.h>

#include <numeric>

#include "busrl/agent.hpp"
#include "busrl/parallel.hpp"

using namespace busrl;

namespace {

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::kSerial : Execution::kParallel;
}

void label(benchmark::State& state) {
  state.SetLabel(state.range(0) == 0 ? "serial" : "parallel x" + std::to_string(max_threads()));
}

void BM_CollectRollout(benchmark::State& state) {
  RolloutCollector collector(EnvConfig{}, DRConfig{}, 4, 1, 0.99, true);
  Rng rng(1);
  const PolicyNets nets = PolicyNets::random(collector.observation_size(), {64, 64}, rng);
  for (auto _ : state) {
    RolloutBuffer buffer = collector.collect(nets, 1024, exec_of(state));
    benchmark::DoNotOptimize(buffer.rewards.data());
  }
  state.SetItemsProcessed(state.iterations() * 1024);
  label(state);
}

void BM_MinibatchGradient(benchmark::State& state) {
  RolloutCollector collector(EnvConfig{}, DRConfig{}, 4, 2, 0.99, true);
  Rng rng(2);
  const PolicyNets nets = PolicyNets::random(collector.observation_size(), {64, 64}, rng);
  RolloutBuffer buffer = collector.collect(nets, 512, Execution::kSerial);
  compute_gae(buffer, 0.99, 0.95);
  std::vector<std::size_t> idx(256);
  std::iota(idx.begin(), idx.end(), 0);
  const PpoConfig cfg;
  PolicyNets grad = nets.zeros_like();
  for (auto _ : state) {
    const PpoLoss loss = ppo_minibatch_gradient(nets, buffer, idx, buffer.advantages, cfg, grad, exec_of(state));
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(idx.size()));
  label(state);
}

void BM_Evaluate(benchmark::State& state) {
  EnvConfig env;
  env.episode_length = 1800;
  Rng rng(3);
  const PolicyNets nets = PolicyNets::random(BusEnv::observation_size(env.num_stations, env.num_buses), {64, 64}, rng);
  for (auto _ : state) {
    const auto returns = evaluate_policy(env, DRConfig{}, nets, EnvLesson::no_curriculum(), 4, 3, false, exec_of(state));
    benchmark::DoNotOptimize(returns.data());
  }
  label(state);
}

}  // namespace

BENCHMARK(BM_CollectRollout)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MinibatchGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Evaluate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

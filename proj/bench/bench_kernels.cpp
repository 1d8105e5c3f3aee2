// Loss-and-gradient throughput on one training minibatch: nested-dual
// reference, serial jet kernel and OpenMP jet kernel.

#include <benchmark/benchmark.h>

#include <numeric>

#include "nhlnn/trainer.hpp"

namespace {

using namespace nhlnn;

struct Fixture {
  data::Dataset d;
  train::Samples lnn, nh;
  lagnet::Network<double> net, narrow;

  Fixture() {
    data::GenerateOptions o;
    o.trajectories = 1;
    o.steps = 1000;
    o.seed = 1;
    d = data::generate(System::make("particle"), o);
    lnn = train::make_samples(d.trajectories, d.system, lagnet::Mode::lnn);
    nh = train::make_samples(d.trajectories, d.system, lagnet::Mode::lnn_nh);
    net = lagnet::init_network(6, 1);
    narrow = lagnet::init_network(6, 1, {16, 16});
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::vector<std::size_t> first(std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Arguments: batch size, constrained mode, hidden width (16 or 128).
const train::Samples& samples(const benchmark::State& state) {
  return state.range(1) ? fixture().nh : fixture().lnn;
}

const lagnet::Network<double>& network(const benchmark::State& state) {
  return state.range(2) == 16 ? fixture().narrow : fixture().net;
}

void BM_Reference(benchmark::State& state) {
  const auto idx = first(static_cast<std::size_t>(state.range(0)));
  std::vector<double> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train::reference_loss_and_gradient(network(state), samples(state), idx, 1e-6, grad));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_KernelSerial(benchmark::State& state) {
  const auto idx = first(static_cast<std::size_t>(state.range(0)));
  std::vector<double> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train::loss_and_gradient(network(state), samples(state), idx, 1e-6, grad, false));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_KernelParallel(benchmark::State& state) {
  const auto idx = first(static_cast<std::size_t>(state.range(0)));
  std::vector<double> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train::loss_and_gradient(network(state), samples(state), idx, 1e-6, grad, true));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Reference)->Args({10, 0, 16})->Args({10, 1, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelSerial)
    ->Args({10, 0, 16})
    ->Args({10, 1, 16})
    ->Args({1000, 0, 128})
    ->Args({1000, 1, 128})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelParallel)->Args({1000, 0, 128})->Args({1000, 1, 128})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gorila/learner.hpp"
#include "gorila/nn.hpp"

namespace {

using namespace gorila;

std::vector<double> random_state(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

QNetwork network(std::size_t width) {
    const std::vector<std::size_t> hidden{width, width};
    QNetwork net = QNetwork::mlp(64, hidden, 4);
    net.init_uniform(1);
    return net;
}

void BM_Forward(benchmark::State& state) {
    const QNetwork net = network(static_cast<std::size_t>(state.range(0)));
    const auto s = random_state(64, 2);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(s));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128)->Arg(512);

void BM_BackwardInto(benchmark::State& state) {
    const QNetwork net = network(static_cast<std::size_t>(state.range(0)));
    const auto s = random_state(64, 3);
    std::vector<double> grad(net.params().size(), 0.0);
    for (auto _ : state) {
        net.backward_into(s, 1, 0.5, grad);
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_BackwardInto)->Arg(32)->Arg(128)->Arg(512);

void BM_MinibatchGradient(benchmark::State& state) {
    const QNetwork net = network(128);
    std::vector<Transition> batch(static_cast<std::size_t>(state.range(0)));
    std::uint64_t seed = 10;
    for (auto& t : batch) {
        t.state = random_state(64, seed++);
        t.next_state = random_state(64, seed++);
        t.action = static_cast<std::uint32_t>(seed % 4);
        t.reward = 0.5;
    }
    for (auto _ : state) benchmark::DoNotOptimize(minibatch_gradient(net, net, batch, Discount{0.99}, nullptr));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MinibatchGradient)->Arg(32);

void BM_AdaGrad(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> params = random_state(n, 4);
    const std::vector<double> grad = random_state(n, 5);
    AdaGradState acc = AdaGradState::fresh(n, 0.01, 1e-8);
    for (auto _ : state) {
        adagrad_apply(params, grad, acc);
        benchmark::ClobberMemory();
    }
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(n * sizeof(double)));
}
BENCHMARK(BM_AdaGrad)->Arg(1 << 12)->Arg(1 << 18);

}  // namespace

// Serial reference vs OpenMP kernels, plus one full forward/backward pass.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cse/kernels.hpp"
#include "cse/network.hpp"

namespace {

using namespace cse::kernels;

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

ConvDims dims_for(const benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0)), out = static_cast<std::size_t>(state.range(1));
  const auto side = static_cast<std::size_t>(state.range(2));
  return {in, out, side, side};
}

template <auto Fn>
void conv_forward(benchmark::State& state) {
  const ConvDims d = dims_for(state);
  const auto in = random_floats(d.in_channels * d.height * d.width, 1);
  const auto w = random_floats(d.out_channels * d.in_channels * 9, 2);
  const auto b = random_floats(d.out_channels, 3);
  std::vector<float> out(d.out_channels * d.height * d.width);
  for (auto _ : state) {
    Fn(d, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(out.size() * d.in_channels * 9));
}

template <auto Fn>
void conv_backward(benchmark::State& state) {
  const ConvDims d = dims_for(state);
  const auto g = random_floats(d.out_channels * d.height * d.width, 4);
  const auto w = random_floats(d.out_channels * d.in_channels * 9, 5);
  std::vector<float> gin(d.in_channels * d.height * d.width);
  for (auto _ : state) {
    Fn(d, g, w, gin);
    benchmark::DoNotOptimize(gin.data());
  }
}

template <auto Fn>
void log_density(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> features(n * kFeatureDim), means(k * kFeatureDim), chol(k * 25, 0.0), log_norm(k, -1.0);
  for (auto& v : features) v = u(rng);
  for (auto& v : means) v = u(rng);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < kFeatureDim; ++i) chol[j * 25 + i * 6] = 0.2 + u(rng);
  const GaussianComponents comps{k, means, chol, log_norm};
  std::vector<double> out(n * k);
  for (auto _ : state) {
    Fn(features, comps, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * k));
}

void forward_backward(benchmark::State& state) {
  const cse::NetworkModel m = cse::random_model(1);
  cse::Tensor x(m.input_shape);
  const auto v = random_floats(x.size(), 7);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5f + 0.5f * v[i];
  for (auto _ : state) {
    const cse::Gradients g = cse::backward(m, x, 1);
    benchmark::DoNotOptimize(g.input_grad.values().data());
  }
}

}  // namespace

BENCHMARK(conv_forward<serial::conv3x3_forward>)->Name("conv_forward/serial")->Args({3, 8, 64})->Args({8, 16, 32})->Args({16, 32, 16});
BENCHMARK(conv_forward<omp::conv3x3_forward>)->Name("conv_forward/omp")->Args({3, 8, 64})->Args({8, 16, 32})->Args({16, 32, 16});
BENCHMARK(conv_backward<serial::conv3x3_backward_input>)->Name("conv_backward/serial")->Args({8, 16, 32})->Args({16, 32, 16});
BENCHMARK(conv_backward<omp::conv3x3_backward_input>)->Name("conv_backward/omp")->Args({8, 16, 32})->Args({16, 32, 16});
BENCHMARK(log_density<serial::gaussian_log_density>)->Name("gaussian_log_density/serial")->Args({4096, 25});
BENCHMARK(log_density<omp::gaussian_log_density>)->Name("gaussian_log_density/omp")->Args({4096, 25});
BENCHMARK(forward_backward);

BENCHMARK_MAIN();

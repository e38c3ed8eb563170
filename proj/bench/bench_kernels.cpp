// Serial reference kernels against their OpenMP counterparts, plus one
// denoiser forward/backward at the acceptance-run size.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tedi/denoiser.hpp"
#include "tedi/kernels.hpp"

namespace k = tedi::nn::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

template <bool Omp>
void BM_gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Omp) k::omp::gemm<float>(false, false, n, n, n, 1.f, a.data(), b.data(), 0.f, c.data());
    else k::serial::gemm<float>(false, false, n, n, n, 1.f, a.data(), b.data(), 0.f, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2L * n * n * n);
}

template <bool Omp>
void BM_group_norm(benchmark::State& state) {
  const k::NormShape s{128, 16, 32, 8};
  const long n = 128L * 16 * 32;
  const auto x = random_vec(n, 3), g = random_vec(128, 4), bt = random_vec(128, 5);
  std::vector<float> y(n), mean(16 * 8), rstd(16 * 8);
  for (auto _ : state) {
    if constexpr (Omp) k::omp::group_norm_forward<float>(s, x.data(), g.data(), bt.data(), 1e-5f, y.data(), mean.data(), rstd.data());
    else k::serial::group_norm_forward<float>(s, x.data(), g.data(), bt.data(), 1e-5f, y.data(), mean.data(), rstd.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Omp>
void BM_attention(benchmark::State& state) {
  const k::AttentionShape s{128, 16, 8};
  const long n = 128L * 16 * 8;
  const auto q = random_vec(n, 6), kk = random_vec(n, 7), v = random_vec(n, 8);
  std::vector<float> out(n), probs(16 * 8 * 8);
  for (auto _ : state) {
    if constexpr (Omp) k::omp::attention_forward<float>(s, q.data(), kk.data(), v.data(), out.data(), probs.data());
    else k::serial::attention_forward<float>(s, q.data(), kk.data(), v.data(), out.data(), probs.data());
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_denoiser_step(benchmark::State& state) {
  tedi::nn::DenoiserConfig cfg;
  cfg.channels = {32, 64, 128};
  cfg.embed_dim = 32;
  tedi::nn::DenoiserModel<float> model(cfg, 0);
  const int batch = static_cast<int>(state.range(0));
  tedi::nn::Tensor<float> x({cfg.features, batch, cfg.frames});
  const auto noise = random_vec(x.numel(), 9);
  for (long i = 0; i < x.numel(); ++i) x[i] = noise[i];
  std::vector<tedi::diffusion::NoiseLevels> levels(batch, tedi::diffusion::NoiseLevels(cfg.frames, 5));
  tedi::nn::Tensor<float> seed(std::vector<int>{cfg.features, batch, cfg.frames}, 1.f);
  for (auto _ : state) {
    tedi::nn::Graph<float> g;
    const auto out = model.forward(g, x, levels);
    g.backward(out, seed);
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_group_norm<false>)->Name("group_norm/serial");
BENCHMARK(BM_group_norm<true>)->Name("group_norm/omp");
BENCHMARK(BM_attention<false>)->Name("attention/serial");
BENCHMARK(BM_attention<true>)->Name("attention/omp");
BENCHMARK(BM_denoiser_step)->Name("denoiser_forward_backward")->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

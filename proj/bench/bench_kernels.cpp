// Blocked/parallel kernels against their serial references, plus the two
// per-sample costs that dominate a training step (EDT and encoder forward).
#include <benchmark/benchmark.h>

#include <vector>

#include "shapeseg/kernels.hpp"
#include "shapeseg/rng.hpp"
#include "shapeseg/sdm.hpp"
#include "shapeseg/vit.hpp"

using namespace shapeseg;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Shapes of a 3x3 convolution at 64x64 with 8 -> 8 channels: m = Co,
// k = Ci*9, n = H*W.
template <bool Blocked>
void BM_Gemm(benchmark::State& state) {
  const std::size_t m = state.range(0), k = state.range(1), n = state.range(2);
  auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Blocked)
      kernels::gemm(false, false, m, n, k, a, b, c, false);
    else
      kernels::reference::gemm(false, false, m, n, k, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * m * n * k));
}
BENCHMARK_TEMPLATE(BM_Gemm, false)->Args({8, 72, 4096})->Args({64, 64, 256});
BENCHMARK_TEMPLATE(BM_Gemm, true)->Args({8, 72, 4096})->Args({64, 64, 256});

template <bool Blocked>
void BM_Conv(benchmark::State& state) {
  kernels::ConvGeometry g{static_cast<std::size_t>(state.range(0)), 64, 64, 3, 1, 1};
  const std::size_t co = state.range(0);
  auto img = random_values(g.channels * g.height * g.width, 3);
  auto w = random_values(co * g.patch_size(), 4);
  auto bias = random_values(co, 5);
  std::vector<double> out(co * g.out_pixels()), scratch(g.patch_size() * g.out_pixels());
  for (auto _ : state) {
    if constexpr (Blocked)
      kernels::conv2d_forward(g, co, img, w, bias, out, scratch);
    else
      kernels::reference::conv2d_forward(g, co, img, w, bias, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK_TEMPLATE(BM_Conv, false)->Arg(8)->Arg(16);
BENCHMARK_TEMPLATE(BM_Conv, true)->Arg(8)->Arg(16);

BoundarySet ring_boundary(std::size_t side) {
  BinaryMask m(side, side);
  for (std::size_t r = side / 4; r < 3 * side / 4; ++r)
    for (std::size_t c = side / 4; c < 3 * side / 4; ++c) m.set(r, c, true);
  return boundary_of(m);
}

void BM_EdtFast(benchmark::State& state) {
  const std::size_t side = state.range(0);
  const BoundarySet b = ring_boundary(side);
  for (auto _ : state) benchmark::DoNotOptimize(edt_squared(b, side, side));
}
BENCHMARK(BM_EdtFast)->Arg(64)->Arg(128);

void BM_EdtBruteForce(benchmark::State& state) {
  const std::size_t side = state.range(0);
  const BoundarySet b = ring_boundary(side);
  for (auto _ : state) benchmark::DoNotOptimize(edt_squared_bruteforce(b, side, side));
}
BENCHMARK(BM_EdtBruteForce)->Arg(64)->Arg(128);

void BM_EncoderForward(benchmark::State& state) {
  const ViTWeights w = init_vit(ViTConfig{}, 7);
  const Tensor img = Tensor::from({1, 64, 64}, random_values(64 * 64, 6));
  for (auto _ : state) benchmark::DoNotOptimize(vit_features(w, img));
}
BENCHMARK(BM_EncoderForward);

}  // namespace

BENCHMARK_MAIN();

// Serial reference kernels against the OpenMP kernels on layer shapes taken
// from the tiny and b0 SegFormer presets. Run with OMP_NUM_THREADS set to
// compare thread counts.

#include <benchmark/benchmark.h>

#include <vector>

#include "glomseg/kernels.hpp"
#include "glomseg/random.hpp"

namespace k = glomseg::kernels;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  glomseg::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = state.range(0);
  const auto a = filled(static_cast<std::size_t>(n * n), 1), b = filled(static_cast<std::size_t>(n * n), 2);
  std::vector<double> c(static_cast<std::size_t>(n * n));
  for (auto _ : state) {
    if constexpr (Parallel)
      k::gemm(false, false, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0, c.data(), n);
    else
      k::reference::gemm(false, false, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

// Stage-one patch embedding of b0 on a 128x128 input: 7x7, stride 4.
k::Conv2dGeometry patch_embed() { return {2, 3, 128, 128, 32, 7, 7, 4, 3, 1}; }
// Depthwise 3x3 of the Mix-FFN at stage one.
k::Conv2dGeometry mixffn_dw() { return {2, 128, 32, 32, 128, 3, 3, 1, 1, 128}; }

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
  const k::Conv2dGeometry g = state.range(0) == 0 ? patch_embed() : mixffn_dw();
  const auto x = filled(static_cast<std::size_t>(g.batch * g.in_channels * g.in_h * g.in_w), 3);
  const auto w = filled(static_cast<std::size_t>(g.weight_numel()), 4);
  const auto out_n = static_cast<std::size_t>(g.batch * g.out_channels * g.out_h() * g.out_w());
  const auto gy = filled(out_n, 5);
  std::vector<double> y(out_n), gx(x.size()), gw(w.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_forward(g, x.data(), w.data(), nullptr, y.data());
      k::conv2d_backward_input(g, gy.data(), w.data(), gx.data());
      k::conv2d_backward_weight(g, x.data(), gy.data(), gw.data(), nullptr);
    } else {
      k::reference::conv2d_forward(g, x.data(), w.data(), nullptr, y.data());
      k::reference::conv2d_backward_input(g, gy.data(), w.data(), gx.data());
      k::reference::conv2d_backward_weight(g, x.data(), gy.data(), gw.data(), nullptr);
    }
    benchmark::DoNotOptimize(y.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

// Decoder upsampling of two-class logits from 1/4 resolution.
template <bool Parallel>
void BM_Bilinear(benchmark::State& state) {
  const std::int64_t out = state.range(0), in = out / 4, planes = 2 * 2;
  const auto x = filled(static_cast<std::size_t>(planes * in * in), 6);
  std::vector<double> y(static_cast<std::size_t>(planes * out * out)), gx(x.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::upsample_bilinear(planes, in, in, out, out, x.data(), y.data());
      k::upsample_bilinear_backward(planes, in, in, out, out, y.data(), gx.data());
    } else {
      k::reference::upsample_bilinear(planes, in, in, out, out, x.data(), y.data());
      k::reference::upsample_bilinear_backward(planes, in, in, out, out, y.data(), gx.data());
    }
    benchmark::DoNotOptimize(gx.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv<false>)->Name("conv_fwd_bwd/reference")->Arg(0)->Arg(1);
BENCHMARK(BM_Conv<true>)->Name("conv_fwd_bwd/parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_Bilinear<false>)->Name("bilinear_fwd_bwd/reference")->Arg(256);
BENCHMARK(BM_Bilinear<true>)->Name("bilinear_fwd_bwd/parallel")->Arg(256);

BENCHMARK_MAIN();

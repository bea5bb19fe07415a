#include <omp.h>

#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "glomseg/kernels.hpp"
#include "glomseg/random.hpp"

using namespace glomseg;
namespace k = glomseg::kernels;

namespace {

std::vector<double> randn(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct ThreadScope {
  explicit ThreadScope(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadScope() { omp_set_num_threads(saved); }
  int saved;
};

}  // namespace

TEST_CASE("gemm matches the serial reference for every transpose combination") {
  Rng rng(1);
  const std::int64_t m = 7, n = 5, kk = 9;
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      auto a = randn(static_cast<std::size_t>(m * kk), rng);
      auto b = randn(static_cast<std::size_t>(kk * n), rng);
      auto c0 = randn(static_cast<std::size_t>(m * n), rng);
      auto c1 = c0;
      const std::int64_t lda = ta ? m : kk, ldb = tb ? kk : n;
      k::gemm(ta, tb, m, n, kk, 0.7, a.data(), lda, b.data(), ldb, 0.3, c0.data(), n);
      k::reference::gemm(ta, tb, m, n, kk, 0.7, a.data(), lda, b.data(), ldb, 0.3, c1.data(), n);
      CHECK(max_abs_diff(c0, c1) < 1e-12);
    }
  }
}

TEST_CASE("gemm against a hand computed product") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};  // 2x3
  const std::vector<double> b{7, 8, 9, 10, 11, 12};  // 3x2
  std::vector<double> c(4, 0.0);
  k::gemm(false, false, 2, 2, 3, 1.0, a.data(), 3, b.data(), 2, 0.0, c.data(), 2);
  CHECK(c == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("conv2d kernels match the reference across geometries") {
  Rng rng(2);
  std::vector<k::Conv2dGeometry> cases;
  cases.push_back({2, 3, 9, 7, 4, 3, 3, 1, 1, 1});
  cases.push_back({1, 4, 8, 8, 6, 3, 3, 2, 1, 2});
  cases.push_back({2, 4, 6, 6, 4, 3, 3, 1, 1, 4});
  cases.push_back({1, 3, 11, 11, 5, 7, 7, 4, 3, 1});
  cases.push_back({1, 2, 5, 5, 3, 1, 1, 1, 0, 1});
  for (const auto& g : cases) {
    CAPTURE(g.kernel_h);
    CAPTURE(g.groups);
    const auto in_n = static_cast<std::size_t>(g.batch * g.in_channels * g.in_h * g.in_w);
    const auto out_n = static_cast<std::size_t>(g.batch * g.out_channels * g.out_h() * g.out_w());
    auto x = randn(in_n, rng);
    auto w = randn(static_cast<std::size_t>(g.weight_numel()), rng);
    auto bias = randn(static_cast<std::size_t>(g.out_channels), rng);
    std::vector<double> y0(out_n), y1(out_n);
    k::conv2d_forward(g, x.data(), w.data(), bias.data(), y0.data());
    k::reference::conv2d_forward(g, x.data(), w.data(), bias.data(), y1.data());
    CHECK(max_abs_diff(y0, y1) < 1e-11);

    auto gy = randn(out_n, rng);
    std::vector<double> gx0(in_n, 0.5), gx1(in_n, 0.5);
    k::conv2d_backward_input(g, gy.data(), w.data(), gx0.data());
    k::reference::conv2d_backward_input(g, gy.data(), w.data(), gx1.data());
    CHECK(max_abs_diff(gx0, gx1) < 1e-11);

    std::vector<double> gw0(w.size(), 0.0), gw1(w.size(), 0.0), gb0(bias.size(), 0.0), gb1(bias.size(), 0.0);
    k::conv2d_backward_weight(g, x.data(), gy.data(), gw0.data(), gb0.data());
    k::reference::conv2d_backward_weight(g, x.data(), gy.data(), gw1.data(), gb1.data());
    CHECK(max_abs_diff(gw0, gw1) < 1e-10);
    CHECK(max_abs_diff(gb0, gb1) < 1e-11);
  }
}

TEST_CASE("bilinear resize matches the reference up and down") {
  Rng rng(3);
  for (auto [ih, iw, oh, ow] : std::vector<std::array<std::int64_t, 4>>{{4, 4, 16, 16}, {7, 5, 3, 9}, {8, 8, 8, 8}}) {
    const std::int64_t planes = 3;
    auto x = randn(static_cast<std::size_t>(planes * ih * iw), rng);
    std::vector<double> y0(static_cast<std::size_t>(planes * oh * ow)), y1(y0.size());
    k::upsample_bilinear(planes, ih, iw, oh, ow, x.data(), y0.data());
    k::reference::upsample_bilinear(planes, ih, iw, oh, ow, x.data(), y1.data());
    CHECK(max_abs_diff(y0, y1) < 1e-13);
    auto gy = randn(y0.size(), rng);
    std::vector<double> g0(x.size(), 0.0), g1(x.size(), 0.0);
    k::upsample_bilinear_backward(planes, ih, iw, oh, ow, gy.data(), g0.data());
    k::reference::upsample_bilinear_backward(planes, ih, iw, oh, ow, gy.data(), g1.data());
    CHECK(max_abs_diff(g0, g1) < 1e-12);
  }
}

TEST_CASE("bilinear resize to the same size is the identity and preserves constants") {
  Rng rng(4);
  auto x = randn(2 * 5 * 6, rng);
  std::vector<double> y(x.size());
  k::upsample_bilinear(2, 5, 6, 5, 6, x.data(), y.data());
  CHECK(max_abs_diff(x, y) < 1e-15);
  std::vector<double> c(12, 3.25), up(2 * 7 * 11);
  k::upsample_bilinear(2, 2, 3, 7, 11, c.data(), up.data());
  for (double v : up) CHECK(v == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("parallel kernels are bit-identical for any thread count") {
  Rng rng(5);
  k::Conv2dGeometry g{2, 4, 12, 12, 8, 3, 3, 1, 1, 1};
  auto x = randn(static_cast<std::size_t>(2 * 4 * 144), rng);
  auto w = randn(static_cast<std::size_t>(g.weight_numel()), rng);
  const auto out_n = static_cast<std::size_t>(2 * 8 * 144);
  auto gy = randn(out_n, rng);
  auto run = [&](int threads) {
    ThreadScope scope(threads);
    std::vector<double> y(out_n), gw(w.size(), 0.0), gx(x.size(), 0.0), c(15 * 13, 0.0);
    k::conv2d_forward(g, x.data(), w.data(), nullptr, y.data());
    k::conv2d_backward_weight(g, x.data(), gy.data(), gw.data(), nullptr);
    k::conv2d_backward_input(g, gy.data(), w.data(), gx.data());
    k::gemm(false, true, 15, 13, 20, 1.0, x.data(), 20, w.data(), 20, 0.0, c.data(), 13);
    y.insert(y.end(), gw.begin(), gw.end());
    y.insert(y.end(), gx.begin(), gx.end());
    y.insert(y.end(), c.begin(), c.end());
    return y;
  };
  const auto one = run(1);
  CHECK(run(2) == one);
  CHECK(run(4) == one);
}

#include "glomseg/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace glomseg::kernels::reference {

using i64 = std::int64_t;

void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, double alpha, const double* a, i64 lda,
          const double* b, i64 ldb, double beta, double* c, i64 ldc) {
  for (i64 i = 0; i < m; ++i)
    for (i64 j = 0; j < n; ++j) {
      double acc = 0.0;
      for (i64 p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      double& cv = c[i * ldc + j];
      cv = alpha * acc + (beta == 0.0 ? 0.0 : beta * cv);
    }
}

void conv2d_forward(const Conv2dGeometry& g, const double* input, const double* weight,
                    const double* bias, double* output) {
  const i64 oh = g.out_h(), ow = g.out_w();
  const i64 icg = g.in_per_group(), ocg = g.out_per_group();
  for (i64 nb = 0; nb < g.batch; ++nb)
    for (i64 oc = 0; oc < g.out_channels; ++oc)
      for (i64 y = 0; y < oh; ++y)
        for (i64 x = 0; x < ow; ++x) {
          double acc = bias ? bias[oc] : 0.0;
          for (i64 ci = 0; ci < icg; ++ci) {
            const i64 ic = (oc / ocg) * icg + ci;
            for (i64 ki = 0; ki < g.kernel_h; ++ki)
              for (i64 kj = 0; kj < g.kernel_w; ++kj) {
                const i64 iy = y * g.stride - g.padding + ki;
                const i64 ix = x * g.stride - g.padding + kj;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += weight[((oc * icg + ci) * g.kernel_h + ki) * g.kernel_w + kj] *
                       input[((nb * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix];
              }
          }
          output[((nb * g.out_channels + oc) * oh + y) * ow + x] = acc;
        }
}

void conv2d_backward_input(const Conv2dGeometry& g, const double* grad_output,
                           const double* weight, double* grad_input) {
  const i64 oh = g.out_h(), ow = g.out_w();
  const i64 icg = g.in_per_group(), ocg = g.out_per_group();
  for (i64 nb = 0; nb < g.batch; ++nb)
    for (i64 oc = 0; oc < g.out_channels; ++oc)
      for (i64 y = 0; y < oh; ++y)
        for (i64 x = 0; x < ow; ++x) {
          const double go = grad_output[((nb * g.out_channels + oc) * oh + y) * ow + x];
          for (i64 ci = 0; ci < icg; ++ci) {
            const i64 ic = (oc / ocg) * icg + ci;
            for (i64 ki = 0; ki < g.kernel_h; ++ki)
              for (i64 kj = 0; kj < g.kernel_w; ++kj) {
                const i64 iy = y * g.stride - g.padding + ki;
                const i64 ix = x * g.stride - g.padding + kj;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                grad_input[((nb * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix] +=
                    go * weight[((oc * icg + ci) * g.kernel_h + ki) * g.kernel_w + kj];
              }
          }
        }
}

void conv2d_backward_weight(const Conv2dGeometry& g, const double* input,
                            const double* grad_output, double* grad_weight, double* grad_bias) {
  const i64 oh = g.out_h(), ow = g.out_w();
  const i64 icg = g.in_per_group(), ocg = g.out_per_group();
  for (i64 nb = 0; nb < g.batch; ++nb)
    for (i64 oc = 0; oc < g.out_channels; ++oc)
      for (i64 y = 0; y < oh; ++y)
        for (i64 x = 0; x < ow; ++x) {
          const double go = grad_output[((nb * g.out_channels + oc) * oh + y) * ow + x];
          if (grad_bias) grad_bias[oc] += go;
          for (i64 ci = 0; ci < icg; ++ci) {
            const i64 ic = (oc / ocg) * icg + ci;
            for (i64 ki = 0; ki < g.kernel_h; ++ki)
              for (i64 kj = 0; kj < g.kernel_w; ++kj) {
                const i64 iy = y * g.stride - g.padding + ki;
                const i64 ix = x * g.stride - g.padding + kj;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                grad_weight[((oc * icg + ci) * g.kernel_h + ki) * g.kernel_w + kj] +=
                    go * input[((nb * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix];
              }
          }
        }
}

namespace {

struct Tap {
  i64 lo, hi;
  double w_hi;
};

Tap tap(i64 dst, i64 in, i64 out) {
  const double src = std::max(0.0, (static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                                           static_cast<double>(out) -
                                       0.5);
  const i64 lo = std::min(static_cast<i64>(std::floor(src)), in - 1);
  return {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
}

}  // namespace

void upsample_bilinear(i64 planes, i64 in_h, i64 in_w, i64 out_h, i64 out_w, const double* input,
                       double* output) {
  for (i64 p = 0; p < planes; ++p)
    for (i64 y = 0; y < out_h; ++y)
      for (i64 x = 0; x < out_w; ++x) {
        const Tap ty = tap(y, in_h, out_h), tx = tap(x, in_w, out_w);
        const double* s = input + p * in_h * in_w;
        output[(p * out_h + y) * out_w + x] =
            (1 - ty.w_hi) * (1 - tx.w_hi) * s[ty.lo * in_w + tx.lo] +
            (1 - ty.w_hi) * tx.w_hi * s[ty.lo * in_w + tx.hi] +
            ty.w_hi * (1 - tx.w_hi) * s[ty.hi * in_w + tx.lo] +
            ty.w_hi * tx.w_hi * s[ty.hi * in_w + tx.hi];
      }
}

void upsample_bilinear_backward(i64 planes, i64 in_h, i64 in_w, i64 out_h, i64 out_w,
                                const double* grad_output, double* grad_input) {
  for (i64 p = 0; p < planes; ++p)
    for (i64 y = 0; y < out_h; ++y)
      for (i64 x = 0; x < out_w; ++x) {
        const Tap ty = tap(y, in_h, out_h), tx = tap(x, in_w, out_w);
        const double g = grad_output[(p * out_h + y) * out_w + x];
        double* s = grad_input + p * in_h * in_w;
        s[ty.lo * in_w + tx.lo] += (1 - ty.w_hi) * (1 - tx.w_hi) * g;
        s[ty.lo * in_w + tx.hi] += (1 - ty.w_hi) * tx.w_hi * g;
        s[ty.hi * in_w + tx.lo] += ty.w_hi * (1 - tx.w_hi) * g;
        s[ty.hi * in_w + tx.hi] += ty.w_hi * tx.w_hi * g;
      }
}

}  // namespace glomseg::kernels::reference

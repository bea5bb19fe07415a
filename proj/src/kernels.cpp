#include "glomseg/kernels.hpp"

#include <algorithm>
#include <vector>

namespace glomseg::kernels {

namespace {

using i64 = std::int64_t;

// Row-major copy of op(X) so the inner gemm loop always streams contiguous rows.
std::vector<double> materialize(bool trans, i64 rows, i64 cols, const double* x, i64 ld) {
  std::vector<double> out(static_cast<std::size_t>(rows * cols));
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r)
    for (i64 c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r * cols + c)] = trans ? x[c * ld + r] : x[r * ld + c];
  return out;
}

void im2col(const Conv2dGeometry& g, const double* image, i64 channel_begin, i64 channels,
            double* cols) {
  const i64 oh = g.out_h(), ow = g.out_w();
  const i64 kk = g.kernel_h * g.kernel_w;
  const i64 rows = channels * kk;
#pragma omp parallel for schedule(static)
  for (i64 row = 0; row < rows; ++row) {
    const i64 c = channel_begin + row / kk;
    const i64 ki = (row % kk) / g.kernel_w;
    const i64 kj = row % g.kernel_w;
    const double* plane = image + c * g.in_h * g.in_w;
    double* dst = cols + row * oh * ow;
    for (i64 y = 0; y < oh; ++y) {
      const i64 iy = y * g.stride - g.padding + ki;
      if (iy < 0 || iy >= g.in_h) {
        std::fill(dst + y * ow, dst + (y + 1) * ow, 0.0);
        continue;
      }
      for (i64 x = 0; x < ow; ++x) {
        const i64 ix = x * g.stride - g.padding + kj;
        dst[y * ow + x] = (ix >= 0 && ix < g.in_w) ? plane[iy * g.in_w + ix] : 0.0;
      }
    }
  }
}

// Accumulates column gradients back onto the image; one thread per channel.
void col2im(const Conv2dGeometry& g, const double* cols, double* image) {
  const i64 oh = g.out_h(), ow = g.out_w();
  const i64 kk = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (i64 c = 0; c < g.in_channels; ++c) {
    double* plane = image + c * g.in_h * g.in_w;
    for (i64 k = 0; k < kk; ++k) {
      const i64 ki = k / g.kernel_w, kj = k % g.kernel_w;
      const double* src = cols + (c * kk + k) * oh * ow;
      for (i64 y = 0; y < oh; ++y) {
        const i64 iy = y * g.stride - g.padding + ki;
        if (iy < 0 || iy >= g.in_h) continue;
        for (i64 x = 0; x < ow; ++x) {
          const i64 ix = x * g.stride - g.padding + kj;
          if (ix >= 0 && ix < g.in_w) plane[iy * g.in_w + ix] += src[y * ow + x];
        }
      }
    }
  }
}

struct Taps {
  std::vector<i64> lo, hi;
  std::vector<double> w_hi;
};

Taps bilinear_taps(i64 in, i64 out) {
  Taps t;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.w_hi.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (i64 d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    i64 lo = std::min(static_cast<i64>(src), in - 1);
    auto i = static_cast<std::size_t>(d);
    t.lo[i] = lo;
    t.hi[i] = lo < in - 1 ? lo + 1 : lo;
    t.w_hi[i] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, double alpha, const double* a, i64 lda,
          const double* b, i64 ldb, double beta, double* c, i64 ldc) {
  std::vector<double> a_buf, b_buf;
  const double* pa = a;
  const double* pb = b;
  i64 sa = lda, sb = ldb;
  if (trans_a) {
    a_buf = materialize(true, m, k, a, lda);
    pa = a_buf.data();
    sa = k;
  }
  if (trans_b) {
    b_buf = materialize(true, k, n, b, ldb);
    pb = b_buf.data();
    sb = n;
  }
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      std::fill(crow, crow + n, 0.0);
    } else if (beta != 1.0) {
      for (i64 j = 0; j < n; ++j) crow[j] *= beta;
    }
    const double* arow = pa + i * sa;
    for (i64 p = 0; p < k; ++p) {
      const double av = alpha * arow[p];
      if (av == 0.0) continue;
      const double* brow = pb + p * sb;
#pragma omp simd
      for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void conv2d_forward(const Conv2dGeometry& g, const double* input, const double* weight,
                    const double* bias, double* output) {
  const i64 oh = g.out_h(), ow = g.out_w(), spatial = oh * ow;
  const i64 in_stride = g.in_channels * g.in_h * g.in_w;
  const i64 out_stride = g.out_channels * spatial;
  if (g.groups == 1) {
    const i64 kdim = g.in_channels * g.kernel_h * g.kernel_w;
    std::vector<double> cols(static_cast<std::size_t>(kdim * spatial));
    for (i64 nb = 0; nb < g.batch; ++nb) {
      im2col(g, input + nb * in_stride, 0, g.in_channels, cols.data());
      double* out = output + nb * out_stride;
      gemm(false, false, g.out_channels, spatial, kdim, 1.0, weight, kdim, cols.data(), spatial,
           0.0, out, spatial);
      if (bias) {
#pragma omp parallel for schedule(static)
        for (i64 oc = 0; oc < g.out_channels; ++oc)
          for (i64 s = 0; s < spatial; ++s) out[oc * spatial + s] += bias[oc];
      }
    }
    return;
  }
  // Grouped (including depthwise): direct loops, one output plane per task.
  const i64 icg = g.in_per_group(), ocg = g.out_per_group();
#pragma omp parallel for schedule(static)
  for (i64 task = 0; task < g.batch * g.out_channels; ++task) {
    const i64 nb = task / g.out_channels, oc = task % g.out_channels;
    const i64 grp = oc / ocg;
    double* out = output + nb * out_stride + oc * spatial;
    std::fill(out, out + spatial, bias ? bias[oc] : 0.0);
    for (i64 ci = 0; ci < icg; ++ci) {
      const double* plane = input + nb * in_stride + (grp * icg + ci) * g.in_h * g.in_w;
      const double* wk = weight + (oc * icg + ci) * g.kernel_h * g.kernel_w;
      for (i64 ki = 0; ki < g.kernel_h; ++ki)
        for (i64 kj = 0; kj < g.kernel_w; ++kj) {
          const double wv = wk[ki * g.kernel_w + kj];
          for (i64 y = 0; y < oh; ++y) {
            const i64 iy = y * g.stride - g.padding + ki;
            if (iy < 0 || iy >= g.in_h) continue;
            for (i64 x = 0; x < ow; ++x) {
              const i64 ix = x * g.stride - g.padding + kj;
              if (ix >= 0 && ix < g.in_w) out[y * ow + x] += wv * plane[iy * g.in_w + ix];
            }
          }
        }
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, const double* grad_output,
                           const double* weight, double* grad_input) {
  const i64 oh = g.out_h(), ow = g.out_w(), spatial = oh * ow;
  const i64 in_stride = g.in_channels * g.in_h * g.in_w;
  const i64 out_stride = g.out_channels * spatial;
  if (g.groups == 1) {
    const i64 kdim = g.in_channels * g.kernel_h * g.kernel_w;
    std::vector<double> cols(static_cast<std::size_t>(kdim * spatial));
    for (i64 nb = 0; nb < g.batch; ++nb) {
      gemm(true, false, kdim, spatial, g.out_channels, 1.0, weight, kdim,
           grad_output + nb * out_stride, spatial, 0.0, cols.data(), spatial);
      col2im(g, cols.data(), grad_input + nb * in_stride);
    }
    return;
  }
  const i64 icg = g.in_per_group(), ocg = g.out_per_group();
#pragma omp parallel for schedule(static)
  for (i64 task = 0; task < g.batch * g.in_channels; ++task) {
    const i64 nb = task / g.in_channels, ic = task % g.in_channels;
    const i64 grp = ic / icg, ci = ic % icg;
    double* plane = grad_input + nb * in_stride + ic * g.in_h * g.in_w;
    for (i64 o = 0; o < ocg; ++o) {
      const i64 oc = grp * ocg + o;
      const double* go = grad_output + nb * out_stride + oc * spatial;
      const double* wk = weight + (oc * icg + ci) * g.kernel_h * g.kernel_w;
      for (i64 ki = 0; ki < g.kernel_h; ++ki)
        for (i64 kj = 0; kj < g.kernel_w; ++kj) {
          const double wv = wk[ki * g.kernel_w + kj];
          for (i64 y = 0; y < oh; ++y) {
            const i64 iy = y * g.stride - g.padding + ki;
            if (iy < 0 || iy >= g.in_h) continue;
            for (i64 x = 0; x < ow; ++x) {
              const i64 ix = x * g.stride - g.padding + kj;
              if (ix >= 0 && ix < g.in_w) plane[iy * g.in_w + ix] += wv * go[y * ow + x];
            }
          }
        }
    }
  }
}

void conv2d_backward_weight(const Conv2dGeometry& g, const double* input,
                            const double* grad_output, double* grad_weight, double* grad_bias) {
  const i64 oh = g.out_h(), ow = g.out_w(), spatial = oh * ow;
  const i64 in_stride = g.in_channels * g.in_h * g.in_w;
  const i64 out_stride = g.out_channels * spatial;
  if (grad_bias) {
#pragma omp parallel for schedule(static)
    for (i64 oc = 0; oc < g.out_channels; ++oc) {
      double acc = 0.0;
      for (i64 nb = 0; nb < g.batch; ++nb) {
        const double* go = grad_output + nb * out_stride + oc * spatial;
        for (i64 s = 0; s < spatial; ++s) acc += go[s];
      }
      grad_bias[oc] += acc;
    }
  }
  if (g.groups == 1) {
    const i64 kdim = g.in_channels * g.kernel_h * g.kernel_w;
    std::vector<double> cols(static_cast<std::size_t>(kdim * spatial));
    for (i64 nb = 0; nb < g.batch; ++nb) {
      im2col(g, input + nb * in_stride, 0, g.in_channels, cols.data());
      gemm(false, true, g.out_channels, kdim, spatial, 1.0, grad_output + nb * out_stride, spatial,
           cols.data(), spatial, 1.0, grad_weight, kdim);
    }
    return;
  }
  const i64 icg = g.in_per_group(), ocg = g.out_per_group();
  const i64 kk = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (i64 oc = 0; oc < g.out_channels; ++oc) {
    const i64 grp = oc / ocg;
    for (i64 ci = 0; ci < icg; ++ci) {
      double* wk = grad_weight + (oc * icg + ci) * kk;
      for (i64 ki = 0; ki < g.kernel_h; ++ki)
        for (i64 kj = 0; kj < g.kernel_w; ++kj) {
          double acc = 0.0;
          for (i64 nb = 0; nb < g.batch; ++nb) {
            const double* plane = input + nb * in_stride + (grp * icg + ci) * g.in_h * g.in_w;
            const double* go = grad_output + nb * out_stride + oc * spatial;
            for (i64 y = 0; y < oh; ++y) {
              const i64 iy = y * g.stride - g.padding + ki;
              if (iy < 0 || iy >= g.in_h) continue;
              for (i64 x = 0; x < ow; ++x) {
                const i64 ix = x * g.stride - g.padding + kj;
                if (ix >= 0 && ix < g.in_w) acc += go[y * ow + x] * plane[iy * g.in_w + ix];
              }
            }
          }
          wk[ki * g.kernel_w + kj] += acc;
        }
    }
  }
}

void upsample_bilinear(i64 planes, i64 in_h, i64 in_w, i64 out_h, i64 out_w, const double* input,
                       double* output) {
  const Taps ty = bilinear_taps(in_h, out_h), tx = bilinear_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const double* src = input + p * in_h * in_w;
    double* dst = output + p * out_h * out_w;
    for (i64 y = 0; y < out_h; ++y) {
      const auto yi = static_cast<std::size_t>(y);
      const double wy1 = ty.w_hi[yi], wy0 = 1.0 - wy1;
      const double* r0 = src + ty.lo[yi] * in_w;
      const double* r1 = src + ty.hi[yi] * in_w;
      for (i64 x = 0; x < out_w; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const double wx1 = tx.w_hi[xi], wx0 = 1.0 - wx1;
        const i64 x0 = tx.lo[xi], x1 = tx.hi[xi];
        dst[y * out_w + x] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
      }
    }
  }
}

void upsample_bilinear_backward(i64 planes, i64 in_h, i64 in_w, i64 out_h, i64 out_w,
                                const double* grad_output, double* grad_input) {
  const Taps ty = bilinear_taps(in_h, out_h), tx = bilinear_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const double* go = grad_output + p * out_h * out_w;
    double* gi = grad_input + p * in_h * in_w;
    for (i64 y = 0; y < out_h; ++y) {
      const auto yi = static_cast<std::size_t>(y);
      const double wy1 = ty.w_hi[yi], wy0 = 1.0 - wy1;
      double* r0 = gi + ty.lo[yi] * in_w;
      double* r1 = gi + ty.hi[yi] * in_w;
      for (i64 x = 0; x < out_w; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const double wx1 = tx.w_hi[xi], wx0 = 1.0 - wx1;
        const i64 x0 = tx.lo[xi], x1 = tx.hi[xi];
        const double v = go[y * out_w + x];
        r0[x0] += wy0 * wx0 * v;
        r0[x1] += wy0 * wx1 * v;
        r1[x0] += wy1 * wx0 * v;
        r1[x1] += wy1 * wx1 * v;
      }
    }
  }
}

}  // namespace glomseg::kernels

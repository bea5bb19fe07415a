#pragma once

#include <cstdint>

// Dense compute kernels behind the autograd ops. Everything in
// glomseg::kernels is OpenMP-parallel over independent outputs, so results are
// identical for any thread count. glomseg::kernels::reference holds plain
// serial loops with the same signatures; tests and the benchmark compare the two.
//
// Backward kernels accumulate (+=) into their gradient buffers.

namespace glomseg::kernels {

struct Conv2dGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t in_h = 1;
  std::int64_t in_w = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t groups = 1;

  std::int64_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::int64_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  std::int64_t in_per_group() const { return in_channels / groups; }
  std::int64_t out_per_group() const { return out_channels / groups; }
  /// Elements in one [Cout, Cin/groups, kh, kw] weight tensor.
  std::int64_t weight_numel() const { return out_channels * in_per_group() * kernel_h * kernel_w; }
};

/// Row-major C = alpha * op(A) * op(B) + beta * C with op(A): MxK, op(B): KxN.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, double alpha,
          const double* a, std::int64_t lda, const double* b, std::int64_t ldb, double beta,
          double* c, std::int64_t ldc);

/// bias may be null.
void conv2d_forward(const Conv2dGeometry& g, const double* input, const double* weight,
                    const double* bias, double* output);
void conv2d_backward_input(const Conv2dGeometry& g, const double* grad_output,
                           const double* weight, double* grad_input);
/// grad_bias may be null.
void conv2d_backward_weight(const Conv2dGeometry& g, const double* input,
                            const double* grad_output, double* grad_weight, double* grad_bias);

/// Bilinear resize of `planes` independent HxW planes, half-pixel centers
/// (align_corners = false).
void upsample_bilinear(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                       std::int64_t out_h, std::int64_t out_w, const double* input,
                       double* output);
void upsample_bilinear_backward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                                std::int64_t out_h, std::int64_t out_w,
                                const double* grad_output, double* grad_input);

namespace reference {

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, double alpha,
          const double* a, std::int64_t lda, const double* b, std::int64_t ldb, double beta,
          double* c, std::int64_t ldc);
void conv2d_forward(const Conv2dGeometry& g, const double* input, const double* weight,
                    const double* bias, double* output);
void conv2d_backward_input(const Conv2dGeometry& g, const double* grad_output,
                           const double* weight, double* grad_input);
void conv2d_backward_weight(const Conv2dGeometry& g, const double* input,
                            const double* grad_output, double* grad_weight, double* grad_bias);
void upsample_bilinear(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                       std::int64_t out_h, std::int64_t out_w, const double* input,
                       double* output);
void upsample_bilinear_backward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                                std::int64_t out_h, std::int64_t out_w,
                                const double* grad_output, double* grad_input);

}  // namespace reference

}  // namespace glomseg::kernels

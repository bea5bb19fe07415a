#pragma once

#include <cstdint>
#include <vector>

#include "glomseg/autograd.hpp"
#include "glomseg/kernels.hpp"

// Differentiable tensor operations. Feature maps are NCHW; token sequences are
// [B, N, C] with the channel dimension last.

namespace glomseg::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);

/// x[B,C,H,W] * gate[B,1,H,W], gate broadcast over channels.
Var mul_channel_broadcast(const Var& x, const Var& gate);
/// x[B,C,H,W] * factors[B,C] (constant, no gradient to factors).
Var scale_channels(const Var& x, const Tensor& factors);

Var relu(const Var& x);
/// Exact (erf-based) GELU.
Var gelu(const Var& x);
Var sigmoid(const Var& x);

/// Softmax over the last dimension.
Var softmax_lastdim(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& perm);
Var concat(const std::vector<Var>& parts, std::size_t dim);

/// bias may be undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, std::int64_t stride,
           std::int64_t padding, std::int64_t groups);
/// x[..., in] · weight[out, in]^T + bias[out].
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Batched a[..., M, K] · b[..., K, N] (or b^T when b is [..., N, K]).
Var batched_matmul(const Var& a, const Var& b, bool transpose_b);

/// Normalizes over the last dimension.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

struct BatchNormState {
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};
/// Training mode normalizes with batch statistics (biased variance) and
/// updates the running estimates (unbiased variance); eval mode uses the
/// running estimates.
Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, const BatchNormState& state,
                 bool training);

Var upsample_bilinear(const Var& x, std::int64_t out_h, std::int64_t out_w);
Var upsample_nearest2x(const Var& x);
Var max_pool2x2(const Var& x);

/// NCHW -> [B, H*W, C].
Var to_tokens(const Var& x);
/// [B, H*W, C] -> NCHW.
Var from_tokens(const Var& x, std::int64_t h, std::int64_t w);

}  // namespace glomseg::ops

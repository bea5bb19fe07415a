#include "glomseg/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace glomseg::ops {

namespace {

using i64 = std::int64_t;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank)
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got " + shape_str(x.shape()));
}

// Gradient buffer of input i, or null when that input takes no gradient.
double* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer().ptr() : nullptr;
}

std::vector<Var> defined(std::initializer_list<Var> vars) {
  std::vector<Var> out;
  for (const auto& v : vars)
    if (v.defined()) out.push_back(v);
  return out;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.numel();
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = grad_of(self, k))
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.numel();
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) g[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.numel();
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * av[i];
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  for (auto& v : out.values()) v *= s;
  return make_result(std::move(out), {x}, [s](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += s * self.grad[i];
  });
}

Var mul_channel_broadcast(const Var& x, const Var& gate) {
  require_rank(x, 4, "mul_channel_broadcast");
  const auto& s = x.shape();
  if (gate.shape() != Shape{s[0], 1, s[2], s[3]})
    throw std::invalid_argument("mul_channel_broadcast: gate must be " +
                                shape_str({s[0], 1, s[2], s[3]}) + ", got " +
                                shape_str(gate.shape()));
  const i64 b = s[0], c = s[1], hw = s[2] * s[3];
  Tensor out = x.value();
  for (i64 n = 0; n < b; ++n)
    for (i64 ch = 0; ch < c; ++ch)
      for (i64 p = 0; p < hw; ++p) out[(n * c + ch) * hw + p] *= gate.value()[n * hw + p];
  return make_result(std::move(out), {x, gate}, [b, c, hw](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& gv = self.inputs[1]->value;
    double* gx = grad_of(self, 0);
    double* gg = grad_of(self, 1);
    for (i64 n = 0; n < b; ++n)
      for (i64 ch = 0; ch < c; ++ch)
        for (i64 p = 0; p < hw; ++p) {
          const i64 i = (n * c + ch) * hw + p;
          if (gx) gx[i] += self.grad[i] * gv[n * hw + p];
          if (gg) gg[n * hw + p] += self.grad[i] * xv[i];
        }
  });
}

Var scale_channels(const Var& x, const Tensor& factors) {
  require_rank(x, 4, "scale_channels");
  const auto& s = x.shape();
  if (factors.shape() != Shape{s[0], s[1]})
    throw std::invalid_argument("scale_channels: factors must be " + shape_str({s[0], s[1]}));
  const i64 planes = s[0] * s[1], hw = s[2] * s[3];
  Tensor out = x.value();
  for (i64 p = 0; p < planes; ++p)
    for (i64 i = 0; i < hw; ++i) out[p * hw + i] *= factors[p];
  return make_result(std::move(out), {x}, [factors, planes, hw](Node& self) {
    double* g = grad_of(self, 0);
    for (i64 p = 0; p < planes; ++p)
      for (i64 i = 0; i < hw; ++i) g[p * hw + i] += self.grad[p * hw + i] * factors[p];
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  return make_result(std::move(out), {x}, [](Node& self) {
    double* g = grad_of(self, 0);
    const Tensor& xv = self.inputs[0]->value;
    for (std::size_t i = 0; i < self.grad.numel(); ++i)
      if (xv[i] > 0.0) g[i] += self.grad[i];
  });
}

Var gelu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return make_result(std::move(out), {x}, [](Node& self) {
    double* g = grad_of(self, 0);
    const Tensor& xv = self.inputs[0]->value;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  Tensor y = out;
  return make_result(std::move(out), {x}, [y = std::move(y)](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax_lastdim(const Var& x) {
  const i64 cols = x.shape().back();
  const i64 rows = static_cast<i64>(x.value().numel()) / cols;
  Tensor out = x.value();
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    double* row = out.ptr() + r * cols;
    double mx = row[0];
    for (i64 c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (i64 c = 0; c < cols; ++c) z += (row[c] = std::exp(row[c] - mx));
    for (i64 c = 0; c < cols; ++c) row[c] /= z;
  }
  Tensor y = out;
  return make_result(std::move(out), {x}, [y = std::move(y), rows, cols](Node& self) {
    double* g = grad_of(self, 0);
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) {
      const double* yr = y.ptr() + r * cols;
      const double* gr = self.grad.ptr() + r * cols;
      double dot = 0.0;
      for (i64 c = 0; c < cols; ++c) dot += gr[c] * yr[c];
      for (i64 c = 0; c < cols; ++c) g[r * cols + c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return make_result(Tensor({1}, acc), {x}, [](Node& self) {
    double* g = grad_of(self, 0);
    const double go = self.grad[0];
    for (std::size_t i = 0; i < self.inputs[0]->value.numel(); ++i) g[i] += go;
  });
}

Var mean(const Var& x) {
  const auto n = static_cast<double>(x.value().numel());
  return scale(sum(x), 1.0 / n);
}

Var reshape(const Var& x, Shape shape) {
  return make_result(x.value().reshaped(std::move(shape)), {x}, [](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
  });
}

Var permute(const Var& x, const std::vector<std::size_t>& perm) {
  const Shape& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (perm.size() != rank) throw std::invalid_argument("permute: rank mismatch");
  std::vector<i64> in_strides(rank, 1);
  for (std::size_t d = rank - 1; d > 0; --d) in_strides[d - 1] = in_strides[d] * in_shape[d];
  Shape out_shape(rank);
  std::vector<i64> src_strides(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = in_shape.at(perm[d]);
    src_strides[d] = in_strides[perm[d]];
  }
  // Gather map: output linear index -> input linear index.
  const auto n = x.value().numel();
  std::vector<i64> src(n);
  std::vector<i64> idx(rank, 0);
  i64 offset = 0;
  for (std::size_t o = 0; o < n; ++o) {
    src[o] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offset += src_strides[d];
      if (idx[d] < out_shape[d]) break;
      offset -= src_strides[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  Tensor out(out_shape);
  for (std::size_t o = 0; o < n; ++o) out[o] = x.value()[static_cast<std::size_t>(src[o])];
  return make_result(std::move(out), {x}, [src = std::move(src)](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t o = 0; o < src.size(); ++o) g[src[o]] += self.grad[o];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t dim) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (dim >= out_shape.size()) throw std::invalid_argument("concat: bad dimension");
  i64 total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw std::invalid_argument("concat: rank mismatch");
    total += s[dim];
    s[dim] = out_shape[dim];
    if (s != out_shape)
      throw std::invalid_argument("concat: incompatible shape " + shape_str(p.shape()));
  }
  out_shape[dim] = total;
  i64 outer = 1, inner = 1;
  for (std::size_t d = 0; d < dim; ++d) outer *= out_shape[d];
  for (std::size_t d = dim + 1; d < out_shape.size(); ++d) inner *= out_shape[d];
  Tensor out(out_shape);
  std::vector<i64> widths;
  i64 offset = 0;
  for (const auto& p : parts) {
    const i64 w = p.shape()[dim] * inner;
    widths.push_back(w);
    for (i64 o = 0; o < outer; ++o)
      std::copy_n(p.value().ptr() + o * w, w, out.ptr() + o * total * inner + offset);
    offset += w;
  }
  const i64 row = total * inner;
  return make_result(std::move(out), parts, [widths, outer, row](Node& self) {
    i64 off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (double* g = grad_of(self, k))
        for (i64 o = 0; o < outer; ++o)
          for (i64 i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += self.grad[o * row + off + i];
      off += widths[k];
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, i64 stride, i64 padding, i64 groups) {
  require_rank(x, 4, "conv2d");
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  kernels::Conv2dGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, padding, groups};
  if (groups < 1 || xs[1] % groups != 0 || ws[0] % groups != 0 || ws[1] != xs[1] / groups)
    throw std::invalid_argument("conv2d: weight " + shape_str(ws) + " incompatible with input " +
                                shape_str(xs) + " and groups=" + std::to_string(groups));
  if (g.out_h() < 1 || g.out_w() < 1)
    throw std::invalid_argument("conv2d: input " + shape_str(xs) + " too small for kernel");
  Tensor out({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x.value().ptr(), weight.value().ptr(),
                          bias.defined() ? bias.value().ptr() : nullptr, out.ptr());
  const bool has_bias = bias.defined();
  return make_result(std::move(out), defined({x, weight, bias}), [g, has_bias](Node& self) {
    const double* go = self.grad.ptr();
    if (double* gx = grad_of(self, 0))
      kernels::conv2d_backward_input(g, go, self.inputs[1]->value.ptr(), gx);
    double* gw = grad_of(self, 1);
    double* gb = has_bias ? grad_of(self, 2) : nullptr;
    if (gw) {
      kernels::conv2d_backward_weight(g, self.inputs[0]->value.ptr(), go, gw, gb);
    } else if (gb) {
      const i64 spatial = g.out_h() * g.out_w();
      for (i64 n = 0; n < g.batch; ++n)
        for (i64 oc = 0; oc < g.out_channels; ++oc)
          for (i64 s = 0; s < spatial; ++s) gb[oc] += go[(n * g.out_channels + oc) * spatial + s];
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const i64 in = weight.shape()[1], out_f = weight.shape()[0];
  if (x.shape().back() != in)
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " vs weight " +
                                shape_str(weight.shape()));
  const i64 rows = static_cast<i64>(x.value().numel()) / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  Tensor out(out_shape);
  kernels::gemm(false, true, rows, out_f, in, 1.0, x.value().ptr(), in, weight.value().ptr(), in,
                0.0, out.ptr(), out_f);
  if (bias.defined())
    for (i64 r = 0; r < rows; ++r)
      for (i64 o = 0; o < out_f; ++o) out[r * out_f + o] += bias.value()[o];
  const bool has_bias = bias.defined();
  return make_result(std::move(out), defined({x, weight, bias}), [rows, in, out_f, has_bias](Node& self) {
    const double* go = self.grad.ptr();
    if (double* gx = grad_of(self, 0))
      kernels::gemm(false, false, rows, in, out_f, 1.0, go, out_f, self.inputs[1]->value.ptr(), in,
                    1.0, gx, in);
    if (double* gw = grad_of(self, 1))
      kernels::gemm(true, false, out_f, in, rows, 1.0, go, out_f, self.inputs[0]->value.ptr(), in,
                    1.0, gw, in);
    if (has_bias)
      if (double* gb = grad_of(self, 2))
        for (i64 r = 0; r < rows; ++r)
          for (i64 o = 0; o < out_f; ++o) gb[o] += go[r * out_f + o];
  });
}

Var batched_matmul(const Var& a, const Var& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || as.size() != bs.size())
    throw std::invalid_argument("batched_matmul: rank mismatch");
  const std::size_t r = as.size();
  if (!std::equal(as.begin(), as.end() - 2, bs.begin()))
    throw std::invalid_argument("batched_matmul: batch dims differ " + shape_str(as) + " vs " +
                                shape_str(bs));
  const i64 m = as[r - 2], k = as[r - 1];
  const i64 n = transpose_b ? bs[r - 2] : bs[r - 1];
  if ((transpose_b ? bs[r - 1] : bs[r - 2]) != k)
    throw std::invalid_argument("batched_matmul: inner dims differ " + shape_str(as) + " vs " +
                                shape_str(bs));
  i64 batch = 1;
  for (std::size_t d = 0; d + 2 < r; ++d) batch *= as[d];
  Shape out_shape = as;
  out_shape[r - 1] = n;
  Tensor out(out_shape);
  const i64 b_cols = transpose_b ? k : n;
  for (i64 i = 0; i < batch; ++i)
    kernels::gemm(false, transpose_b, m, n, k, 1.0, a.value().ptr() + i * m * k, k,
                  b.value().ptr() + i * k * n, b_cols, 0.0, out.ptr() + i * m * n, n);
  return make_result(std::move(out), {a, b}, [batch, m, n, k, transpose_b, b_cols](Node& self) {
    const double* av = self.inputs[0]->value.ptr();
    const double* bv = self.inputs[1]->value.ptr();
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    for (i64 i = 0; i < batch; ++i) {
      const double* go = self.grad.ptr() + i * m * n;
      // C = A B   : dA = dC B^T, dB = A^T dC
      // C = A B^T : dA = dC B,   dB = dC^T A
      if (ga)
        kernels::gemm(false, !transpose_b, m, k, n, 1.0, go, n, bv + i * k * n, b_cols, 1.0,
                      ga + i * m * k, k);
      if (gb) {
        if (transpose_b)
          kernels::gemm(true, false, n, k, m, 1.0, go, n, av + i * m * k, k, 1.0, gb + i * k * n, k);
        else
          kernels::gemm(true, false, k, n, m, 1.0, av + i * m * k, k, go, n, 1.0, gb + i * k * n, n);
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const i64 c = x.shape().back();
  const i64 rows = static_cast<i64>(x.value().numel()) / c;
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> rstd(static_cast<std::size_t>(rows));
  const double* xv = x.value().ptr();
  const double* gv = gamma.value().ptr();
  const double* bv = beta.value().ptr();
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const double* row = xv + r * c;
    double mu = 0.0;
    for (i64 j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (i64 j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(r)] = rs;
    for (i64 j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * rs;
      xhat[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), rstd = std::move(rstd), rows, c](Node& self) {
    const double* go = self.grad.ptr();
    const double* gv = self.inputs[1]->value.ptr();
    if (double* gx = grad_of(self, 0)) {
#pragma omp parallel for schedule(static)
      for (i64 r = 0; r < rows; ++r) {
        double mean_g = 0.0, mean_gh = 0.0;
        for (i64 j = 0; j < c; ++j) {
          const double gj = go[r * c + j] * gv[j];
          mean_g += gj;
          mean_gh += gj * xhat[r * c + j];
        }
        mean_g /= static_cast<double>(c);
        mean_gh /= static_cast<double>(c);
        const double rs = rstd[static_cast<std::size_t>(r)];
        for (i64 j = 0; j < c; ++j)
          gx[r * c + j] += rs * (go[r * c + j] * gv[j] - mean_g - xhat[r * c + j] * mean_gh);
      }
    }
    double* gg = grad_of(self, 1);
    double* gb = grad_of(self, 2);
    for (i64 r = 0; r < rows; ++r)
      for (i64 j = 0; j < c; ++j) {
        if (gg) gg[j] += go[r * c + j] * xhat[r * c + j];
        if (gb) gb[j] += go[r * c + j];
      }
  });
}

Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, const BatchNormState& state,
                 bool training) {
  require_rank(x, 4, "batch_norm2d");
  const auto& s = x.shape();
  const i64 b = s[0], c = s[1], hw = s[2] * s[3];
  const i64 count = b * hw;
  Tensor out(s);
  Tensor xhat(s);
  std::vector<double> rstd(static_cast<std::size_t>(c));
  const double* xv = x.value().ptr();
#pragma omp parallel for schedule(static)
  for (i64 ch = 0; ch < c; ++ch) {
    double mu, var;
    if (training) {
      mu = 0.0;
      for (i64 n = 0; n < b; ++n)
        for (i64 p = 0; p < hw; ++p) mu += xv[(n * c + ch) * hw + p];
      mu /= static_cast<double>(count);
      var = 0.0;
      for (i64 n = 0; n < b; ++n)
        for (i64 p = 0; p < hw; ++p) {
          const double d = xv[(n * c + ch) * hw + p] - mu;
          var += d * d;
        }
      var /= static_cast<double>(count);
      if (state.running_mean && state.running_var) {
        const double unbiased =
            count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
        double& rm = (*state.running_mean)[static_cast<std::size_t>(ch)];
        double& rv = (*state.running_var)[static_cast<std::size_t>(ch)];
        rm = (1.0 - state.momentum) * rm + state.momentum * mu;
        rv = (1.0 - state.momentum) * rv + state.momentum * unbiased;
      }
    } else {
      mu = (*state.running_mean)[static_cast<std::size_t>(ch)];
      var = (*state.running_var)[static_cast<std::size_t>(ch)];
    }
    const double rs = 1.0 / std::sqrt(var + state.eps);
    rstd[static_cast<std::size_t>(ch)] = rs;
    const double gm = gamma.value()[static_cast<std::size_t>(ch)];
    const double bt = beta.value()[static_cast<std::size_t>(ch)];
    for (i64 n = 0; n < b; ++n)
      for (i64 p = 0; p < hw; ++p) {
        const i64 i = (n * c + ch) * hw + p;
        xhat[i] = (xv[i] - mu) * rs;
        out[i] = xhat[i] * gm + bt;
      }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), rstd = std::move(rstd), b, c, hw, count,
                      training](Node& self) {
    const double* go = self.grad.ptr();
    const double* gv = self.inputs[1]->value.ptr();
    double* gx = grad_of(self, 0);
    double* gg = grad_of(self, 1);
    double* gb = grad_of(self, 2);
#pragma omp parallel for schedule(static)
    for (i64 ch = 0; ch < c; ++ch) {
      double sum_g = 0.0, sum_gh = 0.0;
      for (i64 n = 0; n < b; ++n)
        for (i64 p = 0; p < hw; ++p) {
          const i64 i = (n * c + ch) * hw + p;
          sum_g += go[i];
          sum_gh += go[i] * xhat[i];
        }
      if (gg) gg[ch] += sum_gh;
      if (gb) gb[ch] += sum_g;
      if (!gx) continue;
      const double scale_c = gv[ch] * rstd[static_cast<std::size_t>(ch)];
      const double mean_g = sum_g / static_cast<double>(count);
      const double mean_gh = sum_gh / static_cast<double>(count);
      for (i64 n = 0; n < b; ++n)
        for (i64 p = 0; p < hw; ++p) {
          const i64 i = (n * c + ch) * hw + p;
          gx[i] += training ? scale_c * (go[i] - mean_g - xhat[i] * mean_gh) : scale_c * go[i];
        }
    }
  });
}

Var upsample_bilinear(const Var& x, i64 out_h, i64 out_w) {
  require_rank(x, 4, "upsample_bilinear");
  const auto& s = x.shape();
  const i64 planes = s[0] * s[1], in_h = s[2], in_w = s[3];
  if (in_h == out_h && in_w == out_w) return x;
  Tensor out({s[0], s[1], out_h, out_w});
  kernels::upsample_bilinear(planes, in_h, in_w, out_h, out_w, x.value().ptr(), out.ptr());
  return make_result(std::move(out), {x}, [planes, in_h, in_w, out_h, out_w](Node& self) {
    kernels::upsample_bilinear_backward(planes, in_h, in_w, out_h, out_w, self.grad.ptr(),
                                        grad_of(self, 0));
  });
}

Var upsample_nearest2x(const Var& x) {
  require_rank(x, 4, "upsample_nearest2x");
  const auto& s = x.shape();
  const i64 planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor out({s[0], s[1], 2 * h, 2 * w});
  for (i64 p = 0; p < planes; ++p)
    for (i64 y = 0; y < 2 * h; ++y)
      for (i64 xx = 0; xx < 2 * w; ++xx)
        out[(p * 2 * h + y) * 2 * w + xx] = x.value()[(p * h + y / 2) * w + xx / 2];
  return make_result(std::move(out), {x}, [planes, h, w](Node& self) {
    double* g = grad_of(self, 0);
    for (i64 p = 0; p < planes; ++p)
      for (i64 y = 0; y < 2 * h; ++y)
        for (i64 xx = 0; xx < 2 * w; ++xx)
          g[(p * h + y / 2) * w + xx / 2] += self.grad[(p * 2 * h + y) * 2 * w + xx];
  });
}

Var max_pool2x2(const Var& x) {
  require_rank(x, 4, "max_pool2x2");
  const auto& s = x.shape();
  const i64 planes = s[0] * s[1], h = s[2], w = s[3], oh = h / 2, ow = w / 2;
  Tensor out({s[0], s[1], oh, ow});
  std::vector<i64> argmax(out.numel());
  for (i64 p = 0; p < planes; ++p)
    for (i64 y = 0; y < oh; ++y)
      for (i64 xx = 0; xx < ow; ++xx) {
        i64 best = (p * h + 2 * y) * w + 2 * xx;
        for (i64 dy = 0; dy < 2; ++dy)
          for (i64 dx = 0; dx < 2; ++dx) {
            const i64 i = (p * h + 2 * y + dy) * w + 2 * xx + dx;
            if (x.value()[i] > x.value()[best]) best = i;
          }
        const i64 o = (p * oh + y) * ow + xx;
        argmax[o] = best;
        out[o] = x.value()[best];
      }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
  });
}

Var to_tokens(const Var& x) {
  require_rank(x, 4, "to_tokens");
  const auto& s = x.shape();
  return reshape(permute(x, {0, 2, 3, 1}), {s[0], s[2] * s[3], s[1]});
}

Var from_tokens(const Var& x, i64 h, i64 w) {
  require_rank(x, 3, "from_tokens");
  const auto& s = x.shape();
  if (s[1] != h * w)
    throw std::invalid_argument("from_tokens: " + std::to_string(s[1]) + " tokens cannot form " +
                                std::to_string(h) + "x" + std::to_string(w));
  return permute(reshape(x, {s[0], h, w, s[2]}), {0, 3, 1, 2});
}

}  // namespace glomseg::ops

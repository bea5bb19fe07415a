#include "glomseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "glomseg/ops.hpp"

namespace glomseg {

namespace {

void check_dense_target(const Shape& logits, const Shape& target, const char* what) {
  if (logits.size() != 4) throw std::invalid_argument("logits must be [B, K, H, W], got " + shape_str(logits));
  const Shape want{logits[0], logits[2], logits[3]};
  if (target != want)
    throw std::invalid_argument(std::string(what) + " shape " + shape_str(target) +
                                " does not match logits " + shape_str(logits));
}

// Per-pixel softmax over the class axis of an NCHW tensor.
Tensor softmax_classes(const Tensor& logits) {
  const std::int64_t b = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  Tensor probs(logits.shape());
  const double* in = logits.ptr();
  double* out = probs.ptr();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t p = 0; p < hw; ++p) {
      const double* x = in + n * k * hw + p;
      double* y = out + n * k * hw + p;
      double mx = x[0];
      for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, x[c * hw]);
      double total = 0.0;
      for (std::int64_t c = 0; c < k; ++c) total += (y[c * hw] = std::exp(x[c * hw] - mx));
      for (std::int64_t c = 0; c < k; ++c) y[c * hw] /= total;
    }
  return probs;
}

}  // namespace

Var masked_cross_entropy(const Var& logits, const Tensor& targets, const Tensor* mask) {
  const Shape& shape = logits.shape();
  check_dense_target(shape, targets.shape(), "target");
  if (mask) check_dense_target(shape, mask->shape(), "mask");
  const std::int64_t b = shape[0], k = shape[1], hw = shape[2] * shape[3];
  const Tensor& x = logits.value();

  for (std::size_t i = 0; i < targets.numel(); ++i) {
    const double t = targets[i];
    if (t != std::floor(t) || t < 0 || t >= static_cast<double>(k))
      throw std::invalid_argument("target class " + std::to_string(t) + " outside [0, " +
                                  std::to_string(k) + ")");
  }

  double count = 0.0;
  for (std::size_t i = 0; i < targets.numel(); ++i) count += mask ? ((*mask)[i] != 0.0) : 1.0;

  Tensor probs = softmax_classes(x);
  double total = 0.0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t p = 0; p < hw; ++p) {
      const std::size_t idx = static_cast<std::size_t>(n * hw + p);
      if (mask && (*mask)[idx] == 0.0) continue;
      const auto cls = static_cast<std::int64_t>(targets[idx]);
      // log-softmax computed from logits directly for accuracy at large margins.
      const double* xp = x.ptr() + n * k * hw + p;
      double mx = xp[0];
      for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, xp[c * hw]);
      double lse = 0.0;
      for (std::int64_t c = 0; c < k; ++c) lse += std::exp(xp[c * hw] - mx);
      total += mx + std::log(lse) - xp[cls * hw];
    }
  const double loss = count > 0 ? total / count : 0.0;

  Tensor tgt = targets;
  Tensor msk = mask ? *mask : Tensor();
  return make_result(Tensor({}, std::vector<double>{loss}), {logits},
                     [probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk), count, b, k,
                      hw](Node& self) {
                       if (count == 0) return;
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       const double g = self.grad[0] / count;
                       Tensor& gx = in.grad_buffer();
                       for (std::int64_t n = 0; n < b; ++n)
                         for (std::int64_t p = 0; p < hw; ++p) {
                           const std::size_t idx = static_cast<std::size_t>(n * hw + p);
                           if (!msk.empty() && msk[idx] == 0.0) continue;
                           const auto cls = static_cast<std::int64_t>(tgt[idx]);
                           for (std::int64_t c = 0; c < k; ++c) {
                             const std::size_t j = static_cast<std::size_t>((n * k + c) * hw + p);
                             gx[j] += g * (probs[j] - (c == cls ? 1.0 : 0.0));
                           }
                         }
                     });
}

Var supervised_loss(const Var& logits, const Tensor& masks) {
  return masked_cross_entropy(logits, masks, nullptr);
}

Var soft_dice_loss(const Var& logits, const Tensor& masks, double smooth) {
  const Shape& shape = logits.shape();
  check_dense_target(shape, masks.shape(), "mask");
  if (shape[1] < 2) throw std::invalid_argument("soft Dice needs a foreground class");
  const std::int64_t b = shape[0], k = shape[1], hw = shape[2] * shape[3];
  Tensor probs = softmax_classes(logits.value());
  double inter = 0.0, psum = 0.0, ysum = 0.0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t p = 0; p < hw; ++p) {
      const double fg = probs[static_cast<std::size_t>((n * k + 1) * hw + p)];
      const double y = masks[static_cast<std::size_t>(n * hw + p)] == 1.0 ? 1.0 : 0.0;
      inter += fg * y;
      psum += fg;
      ysum += y;
    }
  const double num = 2.0 * inter + smooth, den = psum + ysum + smooth;
  Tensor y = masks;
  return make_result(Tensor({}, std::vector<double>{1.0 - num / den}), {logits},
                     [probs = std::move(probs), y = std::move(y), num, den, b, k, hw](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       const double g = self.grad[0];
                       Tensor& gx = in.grad_buffer();
                       for (std::int64_t n = 0; n < b; ++n)
                         for (std::int64_t p = 0; p < hw; ++p) {
                           const double yy = y[static_cast<std::size_t>(n * hw + p)] == 1.0 ? 1.0 : 0.0;
                           // d(loss)/d(fg prob)
                           const double dfg = -(2.0 * yy * den - num) / (den * den);
                           const double fg = probs[static_cast<std::size_t>((n * k + 1) * hw + p)];
                           for (std::int64_t c = 0; c < k; ++c) {
                             const std::size_t j = static_cast<std::size_t>((n * k + c) * hw + p);
                             gx[j] += g * dfg * fg * ((c == 1 ? 1.0 : 0.0) - probs[j]);
                           }
                         }
                     });
}

double PseudoLabelBatch::retention() const {
  if (confidence_mask.numel() == 0) return 0.0;
  double kept = 0.0;
  for (double v : confidence_mask.values()) kept += v;
  return kept / static_cast<double>(confidence_mask.numel());
}

PseudoLabelBatch make_pseudo_labels(const Tensor& weak_logits, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (weak_logits.rank() != 4) throw std::invalid_argument("weak logits must be [B, K, H, W]");
  const std::int64_t b = weak_logits.dim(0), k = weak_logits.dim(1), h = weak_logits.dim(2),
                     w = weak_logits.dim(3), hw = h * w;
  Tensor probs = softmax_classes(weak_logits);
  PseudoLabelBatch out{Tensor({b, h, w}), Tensor({b, h, w})};
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t p = 0; p < hw; ++p) {
      std::int64_t best = 0;
      double best_p = probs[static_cast<std::size_t>(n * k * hw + p)];
      for (std::int64_t c = 1; c < k; ++c) {
        const double pc = probs[static_cast<std::size_t>((n * k + c) * hw + p)];
        if (pc > best_p) {
          best_p = pc;
          best = c;
        }
      }
      out.labels[static_cast<std::size_t>(n * hw + p)] = static_cast<double>(best);
      out.confidence_mask[static_cast<std::size_t>(n * hw + p)] = best_p >= tau ? 1.0 : 0.0;
    }
  return out;
}

void paste_pseudo_labels(PseudoLabelBatch& dst, std::int64_t dst_index, const PseudoLabelBatch& src,
                         std::int64_t src_index, std::int64_t x0, std::int64_t y0, std::int64_t x1,
                         std::int64_t y1) {
  if (dst.labels.shape() != src.labels.shape())
    throw std::invalid_argument("pseudo-label batches differ in shape");
  const std::int64_t h = dst.labels.dim(1), w = dst.labels.dim(2);
  for (std::int64_t y = y0; y < y1; ++y)
    for (std::int64_t x = x0; x < x1; ++x) {
      const auto d = static_cast<std::size_t>((dst_index * h + y) * w + x);
      const auto s = static_cast<std::size_t>((src_index * h + y) * w + x);
      dst.labels[d] = src.labels[s];
      dst.confidence_mask[d] = src.confidence_mask[s];
    }
}

Var consistency_loss(const Var& strong_logits, const PseudoLabelBatch& pseudo) {
  return masked_cross_entropy(strong_logits, pseudo.labels, &pseudo.confidence_mask);
}

Var fixmatch_unsup_loss(const Tensor& weak_logits, const Var& strong_logits, double tau) {
  if (weak_logits.shape() != strong_logits.shape())
    throw std::invalid_argument("weak and strong logits differ in shape");
  return consistency_loss(strong_logits, make_pseudo_labels(weak_logits, tau));
}

Var unimatch_unsup_loss(const Tensor& weak_logits, const Var& fp_logits, const Var& strong1_logits,
                        const Var& strong2_logits, double tau, double w_fp) {
  for (const Var* v : {&fp_logits, &strong1_logits, &strong2_logits})
    if (v->shape() != weak_logits.shape())
      throw std::invalid_argument("UniMatch streams differ in shape: " + shape_str(v->shape()) +
                                  " vs " + shape_str(weak_logits.shape()));
  const PseudoLabelBatch pseudo = make_pseudo_labels(weak_logits, tau);
  return unimatch_unsup_loss(fp_logits, pseudo, strong1_logits, pseudo, strong2_logits, pseudo, w_fp);
}

Var unimatch_unsup_loss(const Var& fp_logits, const PseudoLabelBatch& fp_target,
                        const Var& strong1_logits, const PseudoLabelBatch& strong1_target,
                        const Var& strong2_logits, const PseudoLabelBatch& strong2_target,
                        double w_fp) {
  if (w_fp < 0) throw std::invalid_argument("w_fp must be non-negative");
  const Var fp = consistency_loss(fp_logits, fp_target);
  const Var s1 = consistency_loss(strong1_logits, strong1_target);
  const Var s2 = consistency_loss(strong2_logits, strong2_target);
  return ops::add(ops::scale(fp, w_fp), ops::scale(ops::add(s1, s2), 0.5));
}

}  // namespace glomseg

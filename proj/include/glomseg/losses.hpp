#pragma once

#include "glomseg/autograd.hpp"

namespace glomseg {

/// Mean softmax cross-entropy of logits [B, K, H, W] against class indices
/// [B, H, W], over the pixels where `mask` (same shape, 0/1) is set, or over
/// all pixels when `mask` is null. An empty mask yields 0 with zero gradient.
Var masked_cross_entropy(const Var& logits, const Tensor& targets, const Tensor* mask = nullptr);

/// Mean per-pixel cross-entropy over all pixels.
Var supervised_loss(const Var& logits, const Tensor& masks);

/// 1 - soft Dice of the foreground (class 1) probability against the mask.
Var soft_dice_loss(const Var& logits, const Tensor& masks, double smooth = 1.0);

struct PseudoLabelBatch {
  Tensor labels;           // [B, H, W] argmax class indices
  Tensor confidence_mask;  // [B, H, W], 1 where max softmax >= tau
  /// Fraction of pixels in the confidence mask.
  double retention() const;
};

/// Hard pseudo-labels from weak-view logits; never records a gradient.
PseudoLabelBatch make_pseudo_labels(const Tensor& weak_logits, double tau);

/// Copies `src` labels and mask into `dst` inside the box [x0,x1) x [y0,y1)
/// of sample `dst_index`, taken from sample `src_index`.
void paste_pseudo_labels(PseudoLabelBatch& dst, std::int64_t dst_index, const PseudoLabelBatch& src,
                         std::int64_t src_index, std::int64_t x0, std::int64_t y0, std::int64_t x1,
                         std::int64_t y1);

/// Cross-entropy of strong-view logits against pseudo-labels, averaged over
/// confident pixels only.
Var consistency_loss(const Var& strong_logits, const PseudoLabelBatch& pseudo);

Var fixmatch_unsup_loss(const Tensor& weak_logits, const Var& strong_logits, double tau);

/// w_fp * CE(fp) + (CE(strong1) + CE(strong2)) / 2, all against the weak-view
/// pseudo-labels.
Var unimatch_unsup_loss(const Tensor& weak_logits, const Var& fp_logits, const Var& strong1_logits,
                        const Var& strong2_logits, double tau, double w_fp);

/// Same combination with a separate target per strong stream (CutMix).
Var unimatch_unsup_loss(const Var& fp_logits, const PseudoLabelBatch& fp_target,
                        const Var& strong1_logits, const PseudoLabelBatch& strong1_target,
                        const Var& strong2_logits, const PseudoLabelBatch& strong2_target,
                        double w_fp);

}  // namespace glomseg

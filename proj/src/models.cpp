#include "glomseg/models.hpp"

#include <cmath>
#include <stdexcept>

namespace glomseg {

namespace {

using i64 = std::int64_t;

// ---------------------------------------------------------------------------
// Hierarchical transformer encoder + all-MLP decoder.

class OverlapPatchEmbed : public nn::Module {
 public:
  OverlapPatchEmbed(i64 in, i64 dim, i64 patch, i64 stride, Rng& rng)
      : proj_(register_module("proj", std::make_shared<nn::Conv2d>(
                                          in, dim, nn::Conv2d::Options{patch, stride, patch / 2, 1, true}, rng))),
        norm_(register_module("norm", std::make_shared<nn::LayerNorm>(dim))) {}

  /// Returns tokens [B, h*w, dim] and writes the token grid size.
  Var forward(const Var& x, i64& h, i64& w) {
    Var y = proj_->forward(x);
    h = y.shape()[2];
    w = y.shape()[3];
    return norm_->forward(ops::to_tokens(y));
  }

 private:
  std::shared_ptr<nn::Conv2d> proj_;
  std::shared_ptr<nn::LayerNorm> norm_;
};

/// Multi-head attention whose keys/values come from a spatially reduced
/// (stride sr) copy of the token grid.
class EfficientSelfAttention : public nn::Module {
 public:
  EfficientSelfAttention(i64 dim, i64 heads, i64 sr, Rng& rng) : dim_(dim), heads_(heads), sr_(sr) {
    query_ = register_module("query", std::make_shared<nn::Linear>(dim, dim, rng));
    key_ = register_module("key", std::make_shared<nn::Linear>(dim, dim, rng));
    value_ = register_module("value", std::make_shared<nn::Linear>(dim, dim, rng));
    if (sr > 1) {
      reduce_ = register_module(
          "sr", std::make_shared<nn::Conv2d>(dim, dim, nn::Conv2d::Options{sr, sr, 0, 1, true}, rng));
      reduce_norm_ = register_module("sr_norm", std::make_shared<nn::LayerNorm>(dim, 1e-6));
    }
    out_ = register_module("proj", std::make_shared<nn::Linear>(dim, dim, rng));
  }

  Var forward(const Var& x, i64 h, i64 w) {
    const i64 b = x.shape()[0], n = x.shape()[1], d = dim_ / heads_;
    Var kv_src = x;
    if (reduce_) {
      if (h < sr_ || w < sr_)
        throw std::invalid_argument("attention reduction ratio " + std::to_string(sr_) +
                                    " exceeds token grid " + std::to_string(h) + "x" +
                                    std::to_string(w));
      kv_src = reduce_norm_->forward(ops::to_tokens(reduce_->forward(ops::from_tokens(x, h, w))));
    }
    const i64 m = kv_src.shape()[1];
    auto split = [&](const Var& t, i64 len) {
      return ops::permute(ops::reshape(t, {b, len, heads_, d}), {0, 2, 1, 3});
    };
    Var q = split(query_->forward(x), n);
    Var k = split(key_->forward(kv_src), m);
    Var v = split(value_->forward(kv_src), m);
    Var scores = ops::scale(ops::batched_matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(d)));
    Var ctx = ops::batched_matmul(ops::softmax_lastdim(scores), v, false);
    ctx = ops::reshape(ops::permute(ctx, {0, 2, 1, 3}), {b, n, dim_});
    return out_->forward(ctx);
  }

 private:
  i64 dim_, heads_, sr_;
  std::shared_ptr<nn::Linear> query_, key_, value_, out_;
  std::shared_ptr<nn::Conv2d> reduce_;
  std::shared_ptr<nn::LayerNorm> reduce_norm_;
};

/// Linear -> 3x3 depthwise conv -> GELU -> Linear.
class MixFFN : public nn::Module {
 public:
  MixFFN(i64 dim, i64 hidden, Rng& rng) {
    fc1_ = register_module("dense1", std::make_shared<nn::Linear>(dim, hidden, rng));
    dw_ = register_module("dwconv", std::make_shared<nn::Conv2d>(
                                        hidden, hidden, nn::Conv2d::Options{3, 1, 1, hidden, true}, rng));
    fc2_ = register_module("dense2", std::make_shared<nn::Linear>(hidden, dim, rng));
  }

  Var forward(const Var& x, i64 h, i64 w) {
    Var y = fc1_->forward(x);
    y = ops::to_tokens(dw_->forward(ops::from_tokens(y, h, w)));
    return fc2_->forward(ops::gelu(y));
  }

 private:
  std::shared_ptr<nn::Linear> fc1_, fc2_;
  std::shared_ptr<nn::Conv2d> dw_;
};

class TransformerBlock : public nn::Module {
 public:
  TransformerBlock(i64 dim, i64 heads, i64 sr, i64 mlp_ratio, Rng& rng) {
    norm1_ = register_module("layer_norm_1", std::make_shared<nn::LayerNorm>(dim, 1e-6));
    attn_ = register_module("attention", std::make_shared<EfficientSelfAttention>(dim, heads, sr, rng));
    norm2_ = register_module("layer_norm_2", std::make_shared<nn::LayerNorm>(dim, 1e-6));
    ffn_ = register_module("mlp", std::make_shared<MixFFN>(dim, dim * mlp_ratio, rng));
  }

  Var forward(const Var& x, i64 h, i64 w) {
    Var y = ops::add(x, attn_->forward(norm1_->forward(x), h, w));
    return ops::add(y, ffn_->forward(norm2_->forward(y), h, w));
  }

 private:
  std::shared_ptr<nn::LayerNorm> norm1_, norm2_;
  std::shared_ptr<EfficientSelfAttention> attn_;
  std::shared_ptr<MixFFN> ffn_;
};

class SegFormer : public SegmentationModel {
 public:
  explicit SegFormer(const ModelConfig& cfg) : SegmentationModel(cfg) {
    Rng rng(cfg.init_seed);
    i64 in = cfg.input_channels;
    for (std::size_t s = 0; s < 4; ++s) {
      const std::string tag = std::to_string(s);
      embeds_.push_back(register_module(
          "patch_embed" + tag, std::make_shared<OverlapPatchEmbed>(in, cfg.embed_dims[s], cfg.patch_sizes[s],
                                                                   cfg.strides[s], rng)));
      std::vector<std::shared_ptr<TransformerBlock>> blocks;
      for (i64 d = 0; d < cfg.depths[s]; ++d)
        blocks.push_back(register_module(
            "block" + tag + "." + std::to_string(d),
            std::make_shared<TransformerBlock>(cfg.embed_dims[s], cfg.num_heads[s], cfg.sr_ratios[s],
                                               cfg.mlp_ratio, rng)));
      blocks_.push_back(std::move(blocks));
      norms_.push_back(register_module("norm" + tag, std::make_shared<nn::LayerNorm>(cfg.embed_dims[s], 1e-6)));
      in = cfg.embed_dims[s];
    }
    for (std::size_t s = 0; s < 4; ++s)
      mlps_.push_back(register_module("decode_head.linear_c" + std::to_string(s),
                                      std::make_shared<nn::Linear>(cfg.embed_dims[s], cfg.decoder_dim, rng)));
    fuse_ = register_module("decode_head.linear_fuse",
                            std::make_shared<nn::Conv2d>(4 * cfg.decoder_dim, cfg.decoder_dim,
                                                         nn::Conv2d::Options{1, 1, 0, 1, false}, rng));
    fuse_bn_ = register_module("decode_head.batch_norm", std::make_shared<nn::BatchNorm2d>(cfg.decoder_dim));
    classifier_ = register_module("decode_head.classifier",
                                  std::make_shared<nn::Conv2d>(cfg.decoder_dim, cfg.num_classes,
                                                               nn::Conv2d::Options{1, 1, 0, 1, true}, rng));
  }

 protected:
  Var run(const Var& images, const FeatureHook& deepest) override {
    const i64 out_h = images.shape()[2], out_w = images.shape()[3];
    std::vector<Var> features;
    Var x = images;
    for (std::size_t s = 0; s < 4; ++s) {
      i64 h = 0, w = 0;
      Var t = embeds_[s]->forward(x, h, w);
      for (auto& blk : blocks_[s]) t = blk->forward(t, h, w);
      x = ops::from_tokens(norms_[s]->forward(t), h, w);
      features.push_back(x);
    }
    if (deepest) features.back() = deepest(features.back());

    const i64 h1 = features[0].shape()[2], w1 = features[0].shape()[3];
    std::vector<Var> projected(4);
    for (std::size_t s = 0; s < 4; ++s) {
      const i64 h = features[s].shape()[2], w = features[s].shape()[3];
      Var p = ops::from_tokens(mlps_[s]->forward(ops::to_tokens(features[s])), h, w);
      // Deepest stage first in the fused stack.
      projected[3 - s] = ops::upsample_bilinear(p, h1, w1);
    }
    Var fused = ops::relu(fuse_bn_->forward(fuse_->forward(ops::concat(projected, 1))));
    // The 1x1 classifier commutes with bilinear resampling (both linear, weights
    // sum to one), so classifying before upsampling equals upsampling the fused
    // features first.
    return ops::upsample_bilinear(classifier_->forward(fused), out_h, out_w);
  }

 private:
  std::vector<std::shared_ptr<OverlapPatchEmbed>> embeds_;
  std::vector<std::vector<std::shared_ptr<TransformerBlock>>> blocks_;
  std::vector<std::shared_ptr<nn::LayerNorm>> norms_;
  std::vector<std::shared_ptr<nn::Linear>> mlps_;
  std::shared_ptr<nn::Conv2d> fuse_, classifier_;
  std::shared_ptr<nn::BatchNorm2d> fuse_bn_;
};

// ---------------------------------------------------------------------------
// Attention U-Net.

/// (3x3 conv -> BN -> ReLU) x 2.
class ConvBlock : public nn::Module {
 public:
  ConvBlock(i64 in, i64 out, Rng& rng) {
    c1_ = register_module("conv1", std::make_shared<nn::Conv2d>(in, out, nn::Conv2d::Options{3, 1, 1, 1, true}, rng));
    b1_ = register_module("bn1", std::make_shared<nn::BatchNorm2d>(out));
    c2_ = register_module("conv2", std::make_shared<nn::Conv2d>(out, out, nn::Conv2d::Options{3, 1, 1, 1, true}, rng));
    b2_ = register_module("bn2", std::make_shared<nn::BatchNorm2d>(out));
  }
  Var forward(const Var& x) {
    Var y = ops::relu(b1_->forward(c1_->forward(x)));
    return ops::relu(b2_->forward(c2_->forward(y)));
  }

 private:
  std::shared_ptr<nn::Conv2d> c1_, c2_;
  std::shared_ptr<nn::BatchNorm2d> b1_, b2_;
};

/// Nearest 2x upsample -> 3x3 conv -> BN -> ReLU.
class UpConv : public nn::Module {
 public:
  UpConv(i64 in, i64 out, Rng& rng) {
    conv_ = register_module("conv", std::make_shared<nn::Conv2d>(in, out, nn::Conv2d::Options{3, 1, 1, 1, true}, rng));
    bn_ = register_module("bn", std::make_shared<nn::BatchNorm2d>(out));
  }
  Var forward(const Var& x) { return ops::relu(bn_->forward(conv_->forward(ops::upsample_nearest2x(x)))); }

 private:
  std::shared_ptr<nn::Conv2d> conv_;
  std::shared_ptr<nn::BatchNorm2d> bn_;
};

/// Additive attention gate: skip * sigmoid(psi(relu(Wg g + Wx skip))).
class AttentionGate : public nn::Module {
 public:
  AttentionGate(i64 gate_ch, i64 skip_ch, i64 inter, Rng& rng) {
    wg_ = register_module("W_g", std::make_shared<nn::Conv2d>(gate_ch, inter, nn::Conv2d::Options{1, 1, 0, 1, true}, rng));
    wg_bn_ = register_module("W_g_bn", std::make_shared<nn::BatchNorm2d>(inter));
    wx_ = register_module("W_x", std::make_shared<nn::Conv2d>(skip_ch, inter, nn::Conv2d::Options{1, 1, 0, 1, true}, rng));
    wx_bn_ = register_module("W_x_bn", std::make_shared<nn::BatchNorm2d>(inter));
    psi_ = register_module("psi", std::make_shared<nn::Conv2d>(inter, 1, nn::Conv2d::Options{1, 1, 0, 1, true}, rng));
    psi_bn_ = register_module("psi_bn", std::make_shared<nn::BatchNorm2d>(1));
  }
  Var forward(const Var& gate, const Var& skip) {
    Var a = ops::relu(ops::add(wg_bn_->forward(wg_->forward(gate)), wx_bn_->forward(wx_->forward(skip))));
    Var alpha = ops::sigmoid(psi_bn_->forward(psi_->forward(a)));
    return ops::mul_channel_broadcast(skip, alpha);
  }

 private:
  std::shared_ptr<nn::Conv2d> wg_, wx_, psi_;
  std::shared_ptr<nn::BatchNorm2d> wg_bn_, wx_bn_, psi_bn_;
};

class AttentionUNet : public SegmentationModel {
 public:
  explicit AttentionUNet(const ModelConfig& cfg) : SegmentationModel(cfg) {
    Rng rng(cfg.init_seed);
    const auto& w = cfg.unet_widths;
    i64 in = cfg.input_channels;
    for (std::size_t l = 0; l < 5; ++l) {
      enc_.push_back(register_module("enc" + std::to_string(l + 1), std::make_shared<ConvBlock>(in, w[l], rng)));
      in = w[l];
    }
    for (std::size_t l = 4; l >= 1; --l) {
      const std::string tag = std::to_string(l + 1);
      up_.push_back(register_module("up" + tag, std::make_shared<UpConv>(w[l], w[l - 1], rng)));
      att_.push_back(register_module("att" + tag, std::make_shared<AttentionGate>(w[l - 1], w[l - 1], w[l - 1] / 2, rng)));
      dec_.push_back(register_module("dec" + tag, std::make_shared<ConvBlock>(2 * w[l - 1], w[l - 1], rng)));
    }
    head_ = register_module("head", std::make_shared<nn::Conv2d>(w[0], cfg.num_classes,
                                                                 nn::Conv2d::Options{1, 1, 0, 1, true}, rng));
  }

 protected:
  Var run(const Var& images, const FeatureHook& deepest) override {
    std::vector<Var> skips;
    Var x = images;
    for (std::size_t l = 0; l < 5; ++l) {
      if (l > 0) x = ops::max_pool2x2(x);
      x = enc_[l]->forward(x);
      skips.push_back(x);
    }
    if (deepest) x = deepest(x);
    for (std::size_t k = 0; k < 4; ++k) {
      Var d = up_[k]->forward(x);
      Var gated = att_[k]->forward(d, skips[3 - k]);
      x = dec_[k]->forward(ops::concat({gated, d}, 1));
    }
    return head_->forward(x);
  }

 private:
  std::vector<std::shared_ptr<ConvBlock>> enc_, dec_;
  std::vector<std::shared_ptr<UpConv>> up_;
  std::vector<std::shared_ptr<AttentionGate>> att_;
  std::shared_ptr<nn::Conv2d> head_;
};

}  // namespace

std::string_view to_string(Architecture arch) {
  return arch == Architecture::kSegFormer ? "segformer" : "att_unet";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "segformer") return Architecture::kSegFormer;
  if (text == "att_unet") return Architecture::kAttentionUNet;
  throw std::invalid_argument("unknown architecture '" + std::string(text) +
                              "' (expected segformer or att_unet)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid model config: " + msg); };
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (input_channels < 1) fail("input_channels must be >= 1");
  if (!(drop_rate_fp >= 0.0 && drop_rate_fp < 1.0)) fail("drop_rate_fp must lie in [0,1)");
  if (arch == Architecture::kSegFormer) {
    for (const auto* v : {&embed_dims, &depths, &num_heads, &sr_ratios, &patch_sizes, &strides})
      if (v->size() != 4) fail("segformer needs exactly 4 encoder stages");
    for (std::size_t s = 0; s < 4; ++s) {
      if (embed_dims[s] < 1 || depths[s] < 1 || num_heads[s] < 1 || sr_ratios[s] < 1 ||
          patch_sizes[s] < 1 || strides[s] < 1)
        fail("stage " + std::to_string(s) + " has a non-positive size");
      if (embed_dims[s] % num_heads[s] != 0)
        fail("embed_dims[" + std::to_string(s) + "]=" + std::to_string(embed_dims[s]) +
             " not divisible by num_heads=" + std::to_string(num_heads[s]));
    }
    if (decoder_dim < 1 || mlp_ratio < 1) fail("decoder_dim and mlp_ratio must be positive");
  } else {
    if (unet_widths.size() != 5) fail("att_unet needs exactly 5 widths");
    for (auto w : unet_widths)
      if (w < 2) fail("att_unet widths must be >= 2");
  }
}

i64 ModelConfig::downsampling_factor() const {
  if (arch == Architecture::kAttentionUNet) return 16;
  i64 f = 1;
  for (auto s : strides) f *= s;
  return f;
}

ModelConfig segformer_config(std::string_view variant) {
  ModelConfig c;
  c.arch = Architecture::kSegFormer;
  c.variant = std::string(variant);
  c.num_heads = {1, 2, 5, 8};
  c.sr_ratios = {8, 4, 2, 1};
  c.patch_sizes = {7, 3, 3, 3};
  c.strides = {4, 2, 2, 2};
  c.decoder_dim = 256;
  const std::vector<i64> wide = {64, 128, 320, 512};
  if (variant == "b0") {
    c.embed_dims = {32, 64, 160, 256};
    c.depths = {2, 2, 2, 2};
  } else if (variant == "b1") {
    c.embed_dims = wide;
    c.depths = {2, 2, 2, 2};
  } else if (variant == "b2") {
    c.embed_dims = wide;
    c.depths = {3, 4, 6, 3};
  } else if (variant == "b3") {
    c.embed_dims = wide;
    c.depths = {3, 4, 18, 3};
  } else if (variant == "b4") {
    c.embed_dims = wide;
    c.depths = {3, 8, 27, 3};
  } else if (variant == "b5") {
    c.embed_dims = wide;
    c.depths = {3, 6, 40, 3};
  } else if (variant == "tiny") {
    c.embed_dims = {8, 16, 32, 64};
    c.depths = {1, 1, 1, 1};
    c.num_heads = {1, 1, 2, 2};
    c.decoder_dim = 32;
  } else if (variant == "small") {
    c.embed_dims = {16, 32, 64, 128};
    c.depths = {1, 1, 2, 1};
    c.num_heads = {1, 2, 2, 4};
    c.decoder_dim = 64;
  } else {
    throw std::invalid_argument("unknown segformer variant '" + std::string(variant) +
                                "' (expected b0..b5, tiny, small)");
  }
  return c;
}

ModelConfig attention_unet_config(std::string_view variant) {
  ModelConfig c;
  c.arch = Architecture::kAttentionUNet;
  c.variant = std::string(variant);
  if (variant == "full") {
    c.unet_widths = {128, 256, 512, 1024, 2048};
  } else if (variant == "tiny") {
    c.unet_widths = {8, 16, 32, 64, 128};
  } else if (variant == "small") {
    c.unet_widths = {16, 32, 64, 128, 256};
  } else {
    throw std::invalid_argument("unknown att_unet variant '" + std::string(variant) +
                                "' (expected full, small, tiny)");
  }
  return c;
}

ModelConfig model_config(Architecture arch, std::string_view variant) {
  return arch == Architecture::kSegFormer ? segformer_config(variant) : attention_unet_config(variant);
}

Tensor channel_dropout_factors(i64 batch, i64 channels, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("feature dropout rate must lie in (0,1), got " + std::to_string(p));
  Rng rng(seed);
  Tensor f({batch, channels});
  const double keep = 1.0 / (1.0 - p);
  for (auto& v : f.values()) v = rng.uniform() < p ? 0.0 : keep;
  return f;
}

Var channel_dropout(const Var& features, double p, std::uint64_t seed) {
  return ops::scale_channels(features,
                             channel_dropout_factors(features.shape()[0], features.shape()[1], p, seed));
}

void SegmentationModel::check_input(const Var& images) const {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != config_.input_channels)
    throw std::invalid_argument("model input must be [B, " + std::to_string(config_.input_channels) +
                                ", H, W], got " + shape_str(s));
  const i64 f = config_.downsampling_factor();
  if (s[2] % f != 0 || s[3] % f != 0)
    throw std::invalid_argument("input height/width " + std::to_string(s[2]) + "x" +
                                std::to_string(s[3]) + " must be multiples of " + std::to_string(f));
}

Var SegmentationModel::forward(const Var& images) {
  check_input(images);
  return run(images, {});
}

Var SegmentationModel::forward_feature_perturbed(const Var& images, double drop_rate,
                                                 std::uint64_t seed) {
  check_input(images);
  if (!(drop_rate > 0.0 && drop_rate < 1.0))
    throw std::invalid_argument("feature dropout rate must lie in (0,1), got " + std::to_string(drop_rate));
  return run(images, [&](const Var& f) { return channel_dropout(f, drop_rate, seed); });
}

std::unique_ptr<SegmentationModel> build_model(const ModelConfig& config) {
  config.validate();
  if (config.arch == Architecture::kSegFormer) return std::make_unique<SegFormer>(config);
  return std::make_unique<AttentionUNet>(config);
}

i64 count_parameters(const nn::Module& model) { return model.parameter_count(); }

}  // namespace glomseg

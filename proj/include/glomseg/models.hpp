#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "glomseg/nn.hpp"

namespace glomseg {

enum class Architecture { kSegFormer, kAttentionUNet };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view text);

struct ModelConfig {
  Architecture arch = Architecture::kSegFormer;
  /// Preset name the dimensions came from ("b0".."b5", "tiny", "small",
  /// "full" for the U-Net); informational once the dimensions are set.
  std::string variant = "b1";
  std::int64_t num_classes = 2;
  std::int64_t input_channels = 3;

  // Hierarchical transformer encoder, one entry per stage.
  std::vector<std::int64_t> embed_dims;
  std::vector<std::int64_t> depths;
  std::vector<std::int64_t> num_heads;
  std::vector<std::int64_t> sr_ratios;
  std::vector<std::int64_t> patch_sizes;
  std::vector<std::int64_t> strides;
  std::int64_t mlp_ratio = 4;
  std::int64_t decoder_dim = 256;

  // Attention U-Net encoder widths, shallowest first (5 levels).
  std::vector<std::int64_t> unet_widths;

  /// Channel-dropout rate of the feature-perturbation stream.
  double drop_rate_fp = 0.5;
  std::uint64_t init_seed = 0;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  /// Spatial input dims must be multiples of this.
  std::int64_t downsampling_factor() const;
};

/// SegFormer presets b0..b5 (full size) plus the desk-scale "tiny" and "small".
ModelConfig segformer_config(std::string_view variant);
/// Attention U-Net presets: "full" (widths 128..2048), "small" and "tiny".
ModelConfig attention_unet_config(std::string_view variant);
/// Dispatches on the architecture; unknown variants throw.
ModelConfig model_config(Architecture arch, std::string_view variant);

/// Per-(sample, channel) dropout multipliers: 0 with probability p, otherwise
/// 1/(1-p). Deterministic per seed.
Tensor channel_dropout_factors(std::int64_t batch, std::int64_t channels, double p,
                               std::uint64_t seed);
Var channel_dropout(const Var& features, double p, std::uint64_t seed);

/// Common interface: images [B, C, H, W] -> logits [B, num_classes, H, W].
class SegmentationModel : public nn::Module {
 public:
  using FeatureHook = std::function<Var(const Var&)>;

  explicit SegmentationModel(ModelConfig config) : config_(std::move(config)) {}

  const ModelConfig& config() const { return config_; }

  Var forward(const Var& images);
  /// Same as forward, with channel dropout at rate `drop_rate` applied to
  /// the deepest encoder output before decoding.
  Var forward_feature_perturbed(const Var& images, double drop_rate, std::uint64_t seed);

 protected:
  /// `deepest` (may be empty) maps the deepest encoder feature map before decoding.
  virtual Var run(const Var& images, const FeatureHook& deepest) = 0;

 private:
  void check_input(const Var& images) const;

  ModelConfig config_;
};

std::unique_ptr<SegmentationModel> build_model(const ModelConfig& config);

std::int64_t count_parameters(const nn::Module& model);

}  // namespace glomseg

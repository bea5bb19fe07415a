#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "glomseg/augmentation.hpp"
#include "glomseg/data_catalog.hpp"
#include "glomseg/models.hpp"

namespace glomseg {

enum class Method { kSupervised, kFixMatch, kUniMatch };
std::string_view to_string(Method m);
Method parse_method(std::string_view text);

enum class LrSchedule { kConstant, kPoly };
std::string_view to_string(LrSchedule s);
LrSchedule parse_lr_schedule(std::string_view text);

struct TrainConfig {
  Method method = Method::kSupervised;
  double lr = 1e-4;
  double momentum = 0.9;
  std::int64_t batch_size_labeled = 10;
  /// 0 means "same as labeled".
  std::int64_t batch_size_unlabeled = 0;
  std::int64_t epochs = 30;
  double tau = 0.95;
  double lambda_u = 1.0;
  double w_fp = 0.5;
  /// UniMatch feature-perturbation stream (channel dropout on the deepest
  /// encoder feature); when false only the two strong image streams remain.
  bool feature_perturbation = true;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  double poly_power = 0.9;
  /// Weight of an additive soft-Dice term on the supervised branch (off by default).
  double dice_loss_weight = 0.0;
  std::uint64_t seed = 0;

  std::int64_t unlabeled_batch() const {
    return batch_size_unlabeled > 0 ? batch_size_unlabeled : batch_size_labeled;
  }
  void validate() const;
};

struct AugmentConfig {
  WeakAugSpec weak;
  StrongAugSpec strong;
};

struct EpochStats {
  std::int64_t epoch = 0;  // 1-based
  double sup_loss = 0.0;
  double unsup_loss = 0.0;
  double retention = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  /// Validation Dice when a validation set was given, else negative.
  double val_dice = -1.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  double wall_clock_seconds = 0.0;
};

/// Columns epoch,sup_loss,unsup_loss,retention,lr. Timing is omitted so the
/// file is reproducible byte for byte.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// Non-finite loss; the message carries the step and component losses.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SGD with heavy-ball momentum: v = mu * v + g; p -= lr * v.
class SGD {
 public:
  SGD(std::vector<Var> params, double lr, double momentum);
  void zero_grad();
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> velocity_;
  double lr_;
  double momentum_;
};

/// Learning rate for a 0-based iteration out of `total_iters`.
double scheduled_lr(const TrainConfig& cfg, std::int64_t iter, std::int64_t total_iters);

/// Decoded images (and masks when labeled) of a manifest, in record order.
struct ImageSet {
  std::vector<std::string> ids;
  std::vector<RgbImage> images;
  std::vector<SegMask> masks;  // empty for unlabeled sets

  std::size_t size() const { return images.size(); }
  bool labeled() const { return !masks.empty(); }
};

ImageSet load_image_set(const DatasetManifest& manifest, bool with_masks);

struct TrainOptions {
  /// Checkpoints go here when non-empty.
  std::filesystem::path run_dir;
  bool keep_epoch_checkpoints = true;
  /// Extra metadata stored in every checkpoint.
  std::map<std::string, std::string> checkpoint_meta;
  std::function<void(const EpochStats&)> on_epoch;
  /// Called after each optimizer step with the 0-based global step.
  std::function<void(std::int64_t step)> on_step;
};

struct TrainResult {
  TrainHistory history;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  double best_val_dice = -1.0;
};

/// One epoch is a pass over the shuffled labeled set; the unlabeled set is
/// cycled independently. Per step the objective is
/// supervised + lambda_u * unsupervised. Validation, when given, selects
/// best.ckpt; otherwise best.ckpt is the final state.
TrainResult train(SegmentationModel& model, const ImageSet& labeled, const ImageSet* unlabeled,
                  const ImageSet* validation, const TrainConfig& cfg, const AugmentConfig& aug,
                  const TrainOptions& options = {});

TrainResult train(SegmentationModel& model, const DatasetManifest& labeled,
                  const DatasetManifest* unlabeled, const DatasetManifest* validation,
                  const TrainConfig& cfg, const AugmentConfig& aug, const TrainOptions& options = {});

}  // namespace glomseg

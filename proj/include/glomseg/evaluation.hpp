#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glomseg/data_catalog.hpp"
#include "glomseg/models.hpp"
#include "glomseg/training.hpp"

namespace glomseg {

/// Pixel confusion counts with glomerulus as the positive class.
struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const SegMask& pred, const SegMask& gt);

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double dice = 0.0;
};

/// Any 0/0 ratio is reported as 0.
Metrics metrics_from_counts(const ConfusionCounts& c);

enum class Aggregation { kMicro, kMacro };
std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view text);

struct MetricsReport {
  std::string dataset;
  std::string method;
  double precision = 0.0;
  double recall = 0.0;
  double dice = 0.0;
  std::int64_t n_images = 0;
  std::int64_t n_pixels = 0;
  Aggregation aggregation = Aggregation::kMicro;
};

/// Micro sums the counts first; macro averages per-image metrics.
MetricsReport aggregate(std::span<const ConfusionCounts> per_image, Aggregation aggregation,
                        std::string dataset, std::string method);

/// Argmax masks for a batch of images, computed in eval mode without a graph.
std::vector<SegMask> predict_masks(SegmentationModel& model, std::span<const RgbImage> images,
                                   std::size_t batch_size = 4);

using Predictor = std::function<SegMask(const RgbImage& image, const PatchRecord& record)>;

MetricsReport evaluate(const Predictor& predict, const DatasetManifest& manifest,
                       Aggregation aggregation, std::string dataset, std::string method);
/// Errors: a record without a mask, or a patch whose size the model cannot
/// take (the message names the patch).
MetricsReport evaluate(SegmentationModel& model, const DatasetManifest& manifest,
                       Aggregation aggregation, std::string dataset, std::string method);
MetricsReport evaluate(SegmentationModel& model, const ImageSet& data, Aggregation aggregation,
                       std::string dataset, std::string method);

inline constexpr std::string_view kMetricsCsvHeader =
    "dataset,method,precision,recall,dice,n_images,n_pixels,aggregation";
std::string metrics_csv_row(const MetricsReport& report);
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsReport> reports);

struct CrossValidationResult {
  std::vector<MetricsReport> folds;
  double mean_dice = 0.0;
  /// Sample standard deviation (n - 1 denominator) of the fold Dice scores.
  double std_dice = 0.0;
};

struct CrossValidationOptions {
  std::filesystem::path run_dir;  // per-fold checkpoints under fold_<i>/ when set
  std::string dataset = "fixture";
  Aggregation aggregation = Aggregation::kMicro;
  std::function<void(int fold, const MetricsReport&)> on_fold;
};

/// Uses the manifest's fold assignment (see split_folds); fold i trains on
/// the other folds and is evaluated on fold i with a fresh model.
CrossValidationResult cross_validate(const DatasetManifest& manifest, int k,
                                     const ModelConfig& model_config, const TrainConfig& train_config,
                                     const AugmentConfig& aug, const CrossValidationOptions& options = {});

double sample_std(std::span<const double> values);

}  // namespace glomseg

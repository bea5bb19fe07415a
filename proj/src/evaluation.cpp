#include "glomseg/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "glomseg/autograd.hpp"

namespace glomseg {

namespace {

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Restores the training flag on scope exit.
class EvalMode {
 public:
  explicit EvalMode(SegmentationModel& m) : model_(m), was_training_(m.training()) { m.set_training(false); }
  ~EvalMode() { model_.set_training(was_training_); }
  EvalMode(const EvalMode&) = delete;
  EvalMode& operator=(const EvalMode&) = delete;

 private:
  SegmentationModel& model_;
  bool was_training_;
};

}  // namespace

ConfusionCounts confusion(const SegMask& pred, const SegMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw std::invalid_argument("prediction " + std::to_string(pred.width()) + "x" +
                                std::to_string(pred.height()) + " and ground truth " +
                                std::to_string(gt.width()) + "x" + std::to_string(gt.height()) +
                                " differ in size");
  validate_mask(pred);
  validate_mask(gt);
  ConfusionCounts c;
  const auto p = pred.data(), g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]) (g[i] ? c.tp : c.fp)++;
    else (g[i] ? c.fn : c.tn)++;
  }
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  return {ratio(tp, tp + fp), ratio(tp, tp + fn), ratio(2 * tp, 2 * tp + fp + fn)};
}

std::string_view to_string(Aggregation a) { return a == Aggregation::kMicro ? "micro" : "macro"; }

Aggregation parse_aggregation(std::string_view text) {
  if (text == "micro") return Aggregation::kMicro;
  if (text == "macro") return Aggregation::kMacro;
  throw std::invalid_argument("unknown aggregation '" + std::string(text) + "' (micro|macro)");
}

MetricsReport aggregate(std::span<const ConfusionCounts> per_image, Aggregation aggregation,
                        std::string dataset, std::string method) {
  MetricsReport r;
  r.dataset = std::move(dataset);
  r.method = std::move(method);
  r.aggregation = aggregation;
  r.n_images = static_cast<std::int64_t>(per_image.size());
  ConfusionCounts total;
  for (const auto& c : per_image) total += c;
  r.n_pixels = total.total();
  if (aggregation == Aggregation::kMicro) {
    const Metrics m = metrics_from_counts(total);
    r.precision = m.precision;
    r.recall = m.recall;
    r.dice = m.dice;
  } else if (!per_image.empty()) {
    for (const auto& c : per_image) {
      const Metrics m = metrics_from_counts(c);
      r.precision += m.precision;
      r.recall += m.recall;
      r.dice += m.dice;
    }
    const auto n = static_cast<double>(per_image.size());
    r.precision /= n;
    r.recall /= n;
    r.dice /= n;
  }
  return r;
}

std::vector<SegMask> predict_masks(SegmentationModel& model, std::span<const RgbImage> images,
                                   std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  EvalMode eval(model);
  NoGradGuard no_grad;
  std::vector<SegMask> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size();) {
    // Batch consecutive images that share a size.
    std::size_t end = start + 1;
    while (end < images.size() && end - start < batch_size &&
           images[end].height() == images[start].height() && images[end].width() == images[start].width())
      ++end;
    const Tensor logits = model.forward(Var(images_to_tensor(images.subspan(start, end - start)))).value();
    const std::int64_t b = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    for (std::int64_t n = 0; n < b; ++n) {
      SegMask m(h, w);
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          std::int64_t best = 0;
          for (std::int64_t c = 1; c < k; ++c)
            if (logits.at(n, c, y, x) > logits.at(n, best, y, x)) best = c;
          m.at(y, x) = best == 1 ? 1 : 0;
        }
      out.push_back(std::move(m));
    }
    start = end;
  }
  return out;
}

MetricsReport evaluate(const Predictor& predict, const DatasetManifest& manifest,
                       Aggregation aggregation, std::string dataset, std::string method) {
  std::vector<ConfusionCounts> counts;
  counts.reserve(manifest.size());
  for (const auto& rec : manifest.records) {
    if (!rec.mask_path) throw CatalogError("patch " + rec.patch_id + " has no mask to evaluate against");
    const RgbImage img = read_rgb(rec.image_path);
    const SegMask gt = read_mask(*rec.mask_path);
    counts.push_back(confusion(predict(img, rec), gt));
  }
  return aggregate(counts, aggregation, std::move(dataset), std::move(method));
}

MetricsReport evaluate(SegmentationModel& model, const DatasetManifest& manifest,
                       Aggregation aggregation, std::string dataset, std::string method) {
  const std::int64_t factor = model.config().downsampling_factor();
  for (const auto& rec : manifest.records) {
    if (!rec.mask_path) throw CatalogError("patch " + rec.patch_id + " has no mask to evaluate against");
    if (rec.width % factor != 0 || rec.height % factor != 0)
      throw std::invalid_argument("patch " + rec.patch_id + " is " + std::to_string(rec.width) + "x" +
                                  std::to_string(rec.height) + "; model needs multiples of " +
                                  std::to_string(factor));
  }
  return evaluate(model, load_image_set(manifest, true), aggregation, std::move(dataset), std::move(method));
}

MetricsReport evaluate(SegmentationModel& model, const ImageSet& data, Aggregation aggregation,
                       std::string dataset, std::string method) {
  if (!data.labeled() && data.size() > 0) throw std::invalid_argument("evaluation set has no masks");
  const auto preds = predict_masks(model, data.images);
  std::vector<ConfusionCounts> counts(preds.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < preds.size(); ++i) counts[i] = confusion(preds[i], data.masks[i]);
  return aggregate(counts, aggregation, std::move(dataset), std::move(method));
}

std::string metrics_csv_row(const MetricsReport& r) {
  return r.dataset + "," + r.method + "," + fmt(r.precision) + "," + fmt(r.recall) + "," + fmt(r.dice) +
         "," + std::to_string(r.n_images) + "," + std::to_string(r.n_pixels) + "," +
         std::string(to_string(r.aggregation));
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsReport> reports) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMetricsCsvHeader << "\n";
  for (const auto& r : reports) out << metrics_csv_row(r) << "\n";
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

CrossValidationResult cross_validate(const DatasetManifest& manifest, int k,
                                     const ModelConfig& model_config, const TrainConfig& train_config,
                                     const AugmentConfig& aug, const CrossValidationOptions& options) {
  if (k < 2) throw std::invalid_argument("cross-validation needs k >= 2");
  for (const auto& rec : manifest.records) {
    auto it = manifest.fold_assignment.find(rec.patch_id);
    if (it == manifest.fold_assignment.end())
      throw CatalogError("patch " + rec.patch_id + " has no fold assignment");
    if (it->second < 0 || it->second >= k)
      throw CatalogError("patch " + rec.patch_id + " is in fold " + std::to_string(it->second) +
                         ", outside [0, " + std::to_string(k) + ")");
  }
  manifest.validate();

  CrossValidationResult result;
  std::vector<double> dices;
  for (int fold = 0; fold < k; ++fold) {
    const DatasetManifest train_set = manifest.select_fold(fold, false);
    const DatasetManifest test_set = manifest.select_fold(fold, true);
    if (train_set.size() == 0 || test_set.size() == 0)
      throw CatalogError("fold " + std::to_string(fold) + " leaves an empty train or test split");
    const auto held = test_set.wsi_ids();
    const std::set<std::string> held_out(held.begin(), held.end());
    for (const auto& w : train_set.wsi_ids())
      if (held_out.count(w))
        throw CatalogError("slide " + w + " appears in both splits of fold " + std::to_string(fold));

    auto model = build_model(model_config);
    TrainOptions topts;
    if (!options.run_dir.empty()) topts.run_dir = options.run_dir / ("fold_" + std::to_string(fold));
    topts.keep_epoch_checkpoints = false;
    const ImageSet train_images = load_image_set(train_set, true);
    const ImageSet test_images = load_image_set(test_set, true);
    train(*model, train_images, nullptr, nullptr, train_config, aug, topts);
    MetricsReport report = evaluate(*model, test_images, options.aggregation, options.dataset,
                                    std::string(to_string(train_config.method)) + "/fold" + std::to_string(fold));
    if (options.on_fold) options.on_fold(fold, report);
    dices.push_back(report.dice);
    result.folds.push_back(std::move(report));
  }
  for (double d : dices) result.mean_dice += d;
  result.mean_dice /= static_cast<double>(dices.size());
  result.std_dice = sample_std(dices);
  return result;
}

}  // namespace glomseg

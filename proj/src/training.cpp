#include "glomseg/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "glomseg/checkpoint.hpp"
#include "glomseg/evaluation.hpp"
#include "glomseg/losses.hpp"
#include "glomseg/ops.hpp"
#include "glomseg/random.hpp"

namespace glomseg {

namespace {

// Stream identifiers for derive_seed; labeled and unlabeled draws never share
// a stream, so the unlabeled branch cannot perturb the labeled one.
enum Stream : std::uint64_t {
  kLabeledOrder = 1,
  kLabeledAug = 2,
  kUnlabeledOrder = 3,
  kUnlabeledWeak = 4,
  kUnlabeledStrong1 = 5,
  kUnlabeledStrong2 = 6,
  kPartners = 7,
  kFeatureDrop = 8,
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

// Endless shuffled walk over an unlabeled set, reshuffled on each cycle.
class CyclingSampler {
 public:
  CyclingSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}
  std::size_t next() {
    if (pos_ == order_.size()) {
      order_ = shuffled(n_, derive_seed(seed_, {kUnlabeledOrder, cycle_++}));
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t cycle_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

void check_same_size(std::span<const RgbImage> batch) {
  for (const auto& im : batch)
    if (im.height() != batch[0].height() || im.width() != batch[0].width())
      throw std::invalid_argument("images in a batch must share a size; set a crop size");
}

std::string abort_message(std::int64_t epoch, std::int64_t step, double sup, double unsup) {
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch << " step " << step << ": sup_loss=" << sup
     << " unsup_loss=" << unsup;
  return os.str();
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kSupervised: return "supervised";
    case Method::kFixMatch: return "fixmatch";
    case Method::kUniMatch: return "unimatch";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "supervised") return Method::kSupervised;
  if (text == "fixmatch") return Method::kFixMatch;
  if (text == "unimatch") return Method::kUniMatch;
  throw std::invalid_argument("unknown method '" + std::string(text) + "' (supervised|fixmatch|unimatch)");
}

std::string_view to_string(LrSchedule s) { return s == LrSchedule::kConstant ? "constant" : "poly"; }

LrSchedule parse_lr_schedule(std::string_view text) {
  if (text == "constant") return LrSchedule::kConstant;
  if (text == "poly") return LrSchedule::kPoly;
  throw std::invalid_argument("unknown lr schedule '" + std::string(text) + "' (constant|poly)");
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("train.lr must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("train.momentum must lie in [0,1)");
  if (batch_size_labeled < 1) throw std::invalid_argument("train.batch_size_labeled must be >= 1");
  if (batch_size_unlabeled < 0) throw std::invalid_argument("train.batch_size_unlabeled must be >= 0");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (!(tau > 0 && tau <= 1)) throw std::invalid_argument("train.tau must lie in (0,1]");
  if (!(lambda_u >= 0)) throw std::invalid_argument("train.lambda_u must be >= 0");
  if (!(w_fp >= 0)) throw std::invalid_argument("train.w_fp must be >= 0");
  if (!(poly_power > 0)) throw std::invalid_argument("train.poly_power must be positive");
  if (!(dice_loss_weight >= 0)) throw std::invalid_argument("train.dice_loss_weight must be >= 0");
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,sup_loss,unsup_loss,retention,lr\n";
  for (const auto& e : history.epochs)
    out << e.epoch << "," << fmt(e.sup_loss) << "," << fmt(e.unsup_loss) << "," << fmt(e.retention) << ","
        << fmt(e.lr) << "\n";
}

SGD::SGD(std::vector<Var> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.shape());
}

void SGD::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void SGD::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const Tensor& g = params_[i].grad();
    Tensor& v = velocity_[i];
    Tensor& w = params_[i].mutable_value();
    for (std::size_t j = 0; j < w.numel(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      w[j] -= lr_ * v[j];
    }
  }
}

double scheduled_lr(const TrainConfig& cfg, std::int64_t iter, std::int64_t total_iters) {
  if (cfg.lr_schedule == LrSchedule::kConstant || total_iters <= 0) return cfg.lr;
  const double progress = static_cast<double>(iter) / static_cast<double>(total_iters);
  return cfg.lr * std::pow(std::max(0.0, 1.0 - progress), cfg.poly_power);
}

ImageSet load_image_set(const DatasetManifest& manifest, bool with_masks) {
  ImageSet set;
  const std::size_t n = manifest.size();
  set.ids.resize(n);
  set.images.resize(n);
  if (with_masks) set.masks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = manifest.records[i];
    set.ids[i] = rec.patch_id;
    set.images[i] = read_rgb(rec.image_path);
    if (with_masks) {
      if (!rec.mask_path) throw CatalogError("patch " + rec.patch_id + " has no mask");
      set.masks[i] = read_mask(*rec.mask_path);
      if (set.masks[i].height() != set.images[i].height() || set.masks[i].width() != set.images[i].width())
        throw CatalogError("patch " + rec.patch_id + ": mask and image sizes differ");
    }
  }
  return set;
}

TrainResult train(SegmentationModel& model, const ImageSet& labeled, const ImageSet* unlabeled,
                  const ImageSet* validation, const TrainConfig& cfg, const AugmentConfig& aug,
                  const TrainOptions& options) {
  cfg.validate();
  aug.weak.validate();
  aug.strong.validate();
  if (!labeled.labeled() || labeled.size() == 0) throw std::invalid_argument("labeled set is empty or has no masks");
  const bool semi = cfg.method != Method::kSupervised;
  if (semi && (!unlabeled || unlabeled->size() == 0))
    throw std::invalid_argument(std::string(to_string(cfg.method)) + " needs an unlabeled set");
  if (static_cast<std::size_t>(cfg.batch_size_labeled) > labeled.size())
    throw std::invalid_argument("train.batch_size_labeled exceeds the labeled set size");
  if (semi && static_cast<std::size_t>(cfg.unlabeled_batch()) > unlabeled->size())
    throw std::invalid_argument("train.batch_size_unlabeled exceeds the unlabeled set size");

  const auto n_lab = labeled.size();
  const auto bl = static_cast<std::size_t>(cfg.batch_size_labeled);
  const auto bu = static_cast<std::size_t>(cfg.unlabeled_batch());
  const auto steps_per_epoch = static_cast<std::int64_t>((n_lab + bl - 1) / bl);
  const std::int64_t total_iters = steps_per_epoch * cfg.epochs;

  StrongAugSpec strong = aug.strong;
  if (bu < 2) strong.cutmix_prob = 0.0;  // no partner to mix with

  model.set_training(true);
  SGD opt(model.parameters(), cfg.lr, cfg.momentum);
  CyclingSampler sampler(semi ? unlabeled->size() : 0, cfg.seed);

  TrainResult result;
  const auto t_start = std::chrono::steady_clock::now();
  std::int64_t global_step = 0;

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    const auto order = shuffled(n_lab, derive_seed(cfg.seed, {kLabeledOrder, static_cast<std::uint64_t>(epoch)}));
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = scheduled_lr(cfg, global_step, total_iters);

    for (std::int64_t step = 0; step < steps_per_epoch; ++step, ++global_step) {
      opt.set_lr(scheduled_lr(cfg, global_step, total_iters));
      const auto gs = static_cast<std::uint64_t>(global_step);

      // Labeled branch: weak geometry on image and mask.
      std::vector<RgbImage> x_images;
      std::vector<SegMask> x_masks;
      for (std::size_t j = step * bl; j < std::min(n_lab, (step + 1) * bl); ++j) {
        const std::size_t idx = order[j];
        auto w = weak_augment(labeled.images[idx], &labeled.masks[idx], aug.weak,
                              derive_seed(cfg.seed, {kLabeledAug, static_cast<std::uint64_t>(epoch), j}));
        x_images.push_back(std::move(w.image));
        x_masks.push_back(std::move(*w.mask));
      }
      check_same_size(x_images);
      const Var logits_x = model.forward(Var(images_to_tensor(x_images)));
      const Tensor target_x = masks_to_tensor(x_masks);
      Var sup = supervised_loss(logits_x, target_x);
      if (cfg.dice_loss_weight > 0)
        sup = ops::add(sup, ops::scale(soft_dice_loss(logits_x, target_x), cfg.dice_loss_weight));

      Var total = sup;
      double unsup_value = 0.0;
      if (semi) {
        std::vector<RgbImage> u_weak;
        for (std::size_t j = 0; j < bu; ++j) {
          const std::size_t idx = sampler.next();
          u_weak.push_back(weak_augment(unlabeled->images[idx], nullptr, aug.weak,
                                        derive_seed(cfg.seed, {kUnlabeledWeak, gs, j}))
                               .image);
        }
        check_same_size(u_weak);
        std::vector<std::size_t> partner;
        if (bu >= 2) {
          Rng prng(derive_seed(cfg.seed, {kPartners, gs}));
          partner = random_derangement(bu, prng);
        }
        const int n_streams = cfg.method == Method::kUniMatch ? 2 : 1;
        std::vector<std::vector<RgbImage>> strong_images(n_streams);
        std::vector<std::vector<std::optional<CutMixBox>>> boxes(n_streams);
        for (int s = 0; s < n_streams; ++s)
          for (std::size_t j = 0; j < bu; ++j) {
            const std::uint64_t sid = s == 0 ? kUnlabeledStrong1 : kUnlabeledStrong2;
            auto r = strong_augment(u_weak[j], strong, derive_seed(cfg.seed, {sid, gs, j}),
                                    partner.empty() ? nullptr : &u_weak[partner[j]]);
            strong_images[s].push_back(std::move(r.image));
            boxes[s].push_back(r.cutmix_box);
          }

        const Tensor u_weak_tensor = images_to_tensor(u_weak);
        Tensor weak_logits;
        {
          NoGradGuard no_grad;
          weak_logits = model.forward(Var(u_weak_tensor)).value();
        }
        const PseudoLabelBatch pseudo = make_pseudo_labels(weak_logits, cfg.tau);
        stats.retention += pseudo.retention();

        std::vector<PseudoLabelBatch> targets(n_streams, pseudo);
        for (int s = 0; s < n_streams; ++s)
          for (std::size_t j = 0; j < bu; ++j)
            if (const auto& b = boxes[s][j])
              paste_pseudo_labels(targets[s], static_cast<std::int64_t>(j), pseudo,
                                  static_cast<std::int64_t>(partner[j]), b->x0, b->y0, b->x1, b->y1);

        Var unsup;
        const Var s1 = model.forward(Var(images_to_tensor(strong_images[0])));
        if (cfg.method == Method::kFixMatch) {
          unsup = consistency_loss(s1, targets[0]);
        } else {
          const Var s2 = model.forward(Var(images_to_tensor(strong_images[1])));
          if (cfg.feature_perturbation) {
            const Var fp = model.forward_feature_perturbed(Var(u_weak_tensor), model.config().drop_rate_fp,
                                                           derive_seed(cfg.seed, {kFeatureDrop, gs}));
            unsup = unimatch_unsup_loss(fp, pseudo, s1, targets[0], s2, targets[1], cfg.w_fp);
          } else {
            unsup = ops::scale(ops::add(consistency_loss(s1, targets[0]), consistency_loss(s2, targets[1])), 0.5);
          }
        }
        unsup_value = unsup.value()[0];
        total = ops::add(sup, ops::scale(unsup, cfg.lambda_u));
      }

      const double sup_value = sup.value()[0];
      if (!std::isfinite(sup_value) || !std::isfinite(unsup_value))
        throw TrainingAborted(abort_message(epoch, global_step, sup_value, unsup_value));
      stats.sup_loss += sup_value;
      stats.unsup_loss += unsup_value;

      opt.zero_grad();
      backward(total);
      opt.step();
      if (options.on_step) options.on_step(global_step);
    }

    stats.sup_loss /= static_cast<double>(steps_per_epoch);
    stats.unsup_loss /= static_cast<double>(steps_per_epoch);
    stats.retention /= static_cast<double>(steps_per_epoch);

    auto meta = options.checkpoint_meta;
    meta["epoch"] = std::to_string(epoch);
    meta["method"] = std::string(to_string(cfg.method));
    if (!options.run_dir.empty() && (options.keep_epoch_checkpoints || epoch == cfg.epochs)) {
      result.last_checkpoint = options.run_dir / ("epoch_" + std::to_string(epoch) + ".ckpt");
      save_checkpoint(result.last_checkpoint, model, meta);
    }
    if (validation && validation->size() > 0) {
      stats.val_dice = evaluate(model, *validation, Aggregation::kMicro, "validation", "train").dice;
      if (stats.val_dice > result.best_val_dice) {
        result.best_val_dice = stats.val_dice;
        if (!options.run_dir.empty()) {
          meta["val_dice"] = fmt(stats.val_dice);
          result.best_checkpoint = options.run_dir / "best.ckpt";
          save_checkpoint(result.best_checkpoint, model, meta);
        }
      }
    } else if (!options.run_dir.empty() && epoch == cfg.epochs) {
      result.best_checkpoint = options.run_dir / "best.ckpt";
      save_checkpoint(result.best_checkpoint, model, meta);
    }
    model.set_training(true);

    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
    result.history.epochs.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
  }
  result.history.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

TrainResult train(SegmentationModel& model, const DatasetManifest& labeled,
                  const DatasetManifest* unlabeled, const DatasetManifest* validation,
                  const TrainConfig& cfg, const AugmentConfig& aug, const TrainOptions& options) {
  const ImageSet lab = load_image_set(labeled, true);
  ImageSet unl, val;
  if (unlabeled) unl = load_image_set(*unlabeled, false);
  if (validation) val = load_image_set(*validation, true);
  return train(model, lab, unlabeled ? &unl : nullptr, validation ? &val : nullptr, cfg, aug, options);
}

}  // namespace glomseg

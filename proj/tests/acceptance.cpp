// Acceptance harness: one PASS/FAIL line per criterion.
//   acceptance            run all criteria
//   acceptance 3 5        run a subset

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "glomseg/augmentation.hpp"
#include "glomseg/data_catalog.hpp"
#include "glomseg/evaluation.hpp"
#include "glomseg/experiment.hpp"
#include "glomseg/fixture.hpp"
#include "glomseg/losses.hpp"
#include "glomseg/models.hpp"
#include "glomseg/training.hpp"
#include "reference_tables.hpp"
#include "support.hpp"

using namespace glomseg;
using glomseg::testing::TempDir;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Report {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failures_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_.push_back(s); }
  Outcome outcome() const {
    std::string d;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + ("failed: " + f);
    for (const auto& n : notes_) d += (d.empty() ? "" : "; ") + n;
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// --- 1 ----------------------------------------------------------------------

Outcome table_consistency() {
  Report r;
  int ok = 0;
  double worst = 0.0;
  for (const auto& row : reference::kSslResults) {
    const double hm = 2 * row.precision * row.recall / (row.precision + row.recall);
    // Same check through the metrics code: counts realising P and R.
    const double tp = 1e6;
    ConfusionCounts c;
    c.tp = static_cast<std::int64_t>(tp);
    c.fp = std::llround(tp * (1 - row.precision) / row.precision);
    c.fn = std::llround(tp * (1 - row.recall) / row.recall);
    const Metrics m = metrics_from_counts(c);
    const double err = std::fabs(hm - row.dice);
    worst = std::max(worst, err);
    const bool row_ok = err <= 0.01 + 1e-12 && std::fabs(m.dice - row.dice) <= 0.01 + 1e-6;
    r.check(row_ok, std::string(row.dataset) + "/" + std::string(row.method) + " 2PR/(P+R)=" + num(hm));
    ok += row_ok;
  }
  r.note(std::to_string(ok) + "/9 rows within 0.01, worst deviation " + num(worst));
  return r.outcome();
}

// --- 2 ----------------------------------------------------------------------

Outcome parameter_counts() {
  Report r;
  std::int64_t previous = 0;
  std::string counts;
  for (const auto& row : reference::kParamCounts) {
    const bool unet = row.model == "att_unet";
    const ModelConfig cfg = unet ? attention_unet_config("full") : segformer_config(row.model);
    std::int64_t n = 0;
    {
      auto model = build_model(cfg);
      n = count_parameters(*model);
    }
    const double rel = static_cast<double>(n) / (row.millions * 1e6) - 1.0;
    r.check(std::fabs(rel) <= 0.10, std::string(row.model) + " has " + std::to_string(n) + " parameters");
    if (!unet) {
      r.check(n > previous, std::string(row.model) + " does not exceed the previous variant");
      previous = n;
    }
    counts += (counts.empty() ? "" : ", ") + std::string(row.model) + " " + num(n / 1e6, 2) + "M (" +
              (rel >= 0 ? "+" : "") + num(100 * rel, 1) + "%)";
  }
  r.note(counts);
  return r.outcome();
}

// --- 3 ----------------------------------------------------------------------

Tensor random_logits(Shape shape, double scale, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

std::vector<double> flatten_params(const SegmentationModel& model) {
  std::vector<double> flat;
  for (const auto& p : model.parameters()) {
    const auto v = p.value().values();
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return flat;
}

std::vector<std::vector<double>> trajectory(Method method, double lambda_u, const ImageSet& lab, const ImageSet& unl) {
  ModelConfig mc = segformer_config("tiny");
  mc.init_seed = 5;
  auto model = build_model(mc);
  TrainConfig cfg;
  cfg.method = method;
  cfg.lambda_u = lambda_u;
  cfg.lr = 0.01;
  cfg.batch_size_labeled = 4;
  cfg.batch_size_unlabeled = 4;
  cfg.epochs = 3;
  cfg.seed = 9;
  std::vector<std::vector<double>> steps;
  TrainOptions opts;
  opts.on_step = [&](std::int64_t) { steps.push_back(flatten_params(*model)); };
  train(*model, lab, method == Method::kSupervised ? nullptr : &unl, nullptr, cfg, AugmentConfig{}, opts);
  return steps;
}

Outcome loss_identities() {
  Report r;
  Rng rng(3);
  // FixMatch with no confident pixel: near-uniform weak logits, tau 0.99.
  {
    const Tensor weak = random_logits({2, 2, 8, 8}, 0.01, rng);
    Var strong(random_logits({2, 2, 8, 8}, 3.0, rng), true);
    const Var loss = fixmatch_unsup_loss(weak, strong, 0.99);
    backward(loss);
    double gmax = 0.0;
    for (double g : strong.grad().values()) gmax = std::max(gmax, std::fabs(g));
    r.check(loss.value()[0] == 0.0 && gmax == 0.0, "FixMatch loss without confident pixels is " + sci(loss.value()[0]));
  }
  // Stream collapse: identical fp/strong streams give (w_fp + 1) x FixMatch.
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor weak = random_logits({2, 2, 6, 6}, 4.0, rng);
    const Var s(random_logits({2, 2, 6, 6}, 2.0, rng));
    const double w_fp = rng.uniform(0.0, 2.0), tau = rng.uniform(0.5, 0.99);
    const double fm = fixmatch_unsup_loss(weak, s, tau).value()[0];
    const double um = unimatch_unsup_loss(weak, s, s, s, tau, w_fp).value()[0];
    worst = std::max(worst, std::fabs(um - (w_fp + 1) * fm));
    // w_fp = 0 with duplicated strong streams reduces to FixMatch.
    worst = std::max(worst, std::fabs(unimatch_unsup_loss(weak, s, s, s, tau, 0.0).value()[0] - fm));
  }
  r.check(worst < 1e-12, "stream-collapse identity off by " + sci(worst));
  // lambda_u = 0 reproduces the supervised parameter trajectory.
  FixtureSpec ls;
  ls.n_slides = 2;
  ls.patches_per_slide = 4;
  ls.stain_hi = 0.25;
  ls.seed = 21;
  FixtureSpec us = ls;
  us.with_masks = false;
  us.n_slides = 4;
  us.stain_hi = 1.0;
  us.seed = 22;
  const ImageSet lab = synthesize_set(ls), unl = synthesize_set(us);
  const auto sup = trajectory(Method::kSupervised, 1.0, lab, unl);
  for (Method m : {Method::kFixMatch, Method::kUniMatch}) {
    const auto semi = trajectory(m, 0.0, lab, unl);
    r.check(semi == sup, std::string(to_string(m)) + " with lambda_u=0 diverges from supervised");
    r.check(trajectory(m, 1.0, lab, unl) != sup, std::string(to_string(m)) + " with lambda_u=1 matches supervised");
  }
  r.note("collapse residual " + sci(worst) + ", " + std::to_string(sup.size()) +
         " optimizer steps compared bit for bit");
  return r.outcome();
}

// --- 4 ----------------------------------------------------------------------

Outcome augmentation_separation() {
  Report r;
  Rng rng(44);
  int geometric_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t h = 8 + static_cast<std::int64_t>(rng.below(33));
    const std::int64_t w = 8 + static_cast<std::int64_t>(rng.below(33));
    // Channels 0/1 carry the source coordinates, channel 2 random content.
    RgbImage img(h, w);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        img.at(y, x, 0) = static_cast<std::uint8_t>(y);
        img.at(y, x, 1) = static_cast<std::uint8_t>(x);
        img.at(y, x, 2) = static_cast<std::uint8_t>(rng.below(256));
      }
    const SegMask mask = glomseg::testing::random_mask(h, w, rng.uniform(), rng);
    WeakAugSpec spec;
    spec.crop_size = rng.bernoulli(0.3) ? 0 : 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(std::min(h, w))));
    spec.rotation_choices.clear();
    for (int deg : {0, 90, 180, 270})
      if (rng.bernoulli(0.6)) spec.rotation_choices.push_back(deg);
    if (spec.rotation_choices.empty()) spec.rotation_choices.push_back(90);
    spec.hflip_prob = rng.uniform();
    spec.vflip_prob = rng.uniform();
    const std::uint64_t seed = rng.next();
    const WeakResult out = weak_augment(img, &mask, spec, seed);
    bool ok = out.mask && out.mask->height() == out.image.height() && out.mask->width() == out.image.width();
    for (std::int64_t y = 0; ok && y < out.image.height(); ++y)
      for (std::int64_t x = 0; ok && x < out.image.width(); ++x) {
        const int sy = out.image.at(y, x, 0), sx = out.image.at(y, x, 1);
        ok = sy < h && sx < w && out.image.at(y, x, 2) == img.at(sy, sx, 2) && out.mask->at(y, x) == mask.at(sy, sx);
      }
    ok = ok && sample_geometry(h, w, spec, seed) == out.geometry && apply_geometry(img, out.geometry) == out.image;
    geometric_ok += ok;
  }
  r.check(geometric_ok == 100, std::to_string(100 - geometric_ok) + " geometric-consistency checks");

  StrongAugSpec photometric;
  photometric.cutmix_prob = 0.0;
  int impulse_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t size = 32;
    const std::int64_t py = 7 + static_cast<std::int64_t>(rng.below(18)), px = 7 + static_cast<std::int64_t>(rng.below(18));
    RgbImage img(size, size);
    for (int c = 0; c < 3; ++c) img.at(py, px, c) = 255;
    const RgbImage out = photometric_augment(img, photometric, rng.next());
    int lo = 255 * 3, peak = 0;
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        const int v = out.at(y, x, 0) + out.at(y, x, 1) + out.at(y, x, 2);
        lo = std::min(lo, v);
        peak = std::max(peak, v);
      }
    double mass = 0.0, cy = 0.0, cx = 0.0;
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        const double v = out.at(y, x, 0) + out.at(y, x, 1) + out.at(y, x, 2) - lo;
        mass += v;
        cy += v * static_cast<double>(y);
        cx += v * static_cast<double>(x);
      }
    const int at = out.at(py, px, 0) + out.at(py, px, 1) + out.at(py, px, 2);
    impulse_ok += mass > 0 && at == peak && std::fabs(cy / mass - static_cast<double>(py)) < 1e-9 &&
                  std::fabs(cx / mass - static_cast<double>(px)) < 1e-9;
  }
  r.check(impulse_ok == 100, std::to_string(100 - impulse_ok) + " impulses moved");

  int identity_ok = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const RgbImage img = glomseg::testing::random_image(16 + trial, 20, rng);
    const SegMask mask = glomseg::testing::random_mask(16 + trial, 20, 0.4, rng);
    const auto weak = weak_augment(img, &mask, WeakAugSpec::identity(), rng.next());
    const auto strong = strong_augment(img, StrongAugSpec::identity(), rng.next());
    const std::uint64_t s = rng.next();
    const auto views = make_views(img, WeakAugSpec::identity(), StrongAugSpec::identity(), {s, s + 1, s + 2});
    identity_ok += weak.image == img && weak.mask == mask && strong.image == img && !strong.cutmix_box &&
                   photometric_augment(img, StrongAugSpec::identity(), s) == img && views.weak_image == img &&
                   views.strong_image_1 == img && views.strong_image_2 == img;
  }
  r.check(identity_ok == 20, "identity specs changed bytes");
  r.note(std::to_string(geometric_ok) + "/100 geometric, " + std::to_string(impulse_ok) + "/100 impulse, " +
         std::to_string(identity_ok) + "/20 identity");
  return r.outcome();
}

// --- 5 ----------------------------------------------------------------------

// Independent decoder: 1-based (start, length) pairs over the flattened mask.
SegMask oracle_decode(const std::string& rle, std::int64_t h, std::int64_t w, bool column_major) {
  SegMask m(h, w);
  std::istringstream is(rle);
  std::int64_t start = 0, len = 0;
  while (is >> start >> len)
    for (std::int64_t i = start - 1; i < start - 1 + len; ++i) {
      const std::int64_t y = column_major ? i % h : i / w;
      const std::int64_t x = column_major ? i / h : i % w;
      m.at(y, x) = 1;
    }
  return m;
}

Outcome oracle_equivalences() {
  Report r;
  Rng rng(55);
  int rle_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(40)), w = 1 + static_cast<std::int64_t>(rng.below(40));
    const SegMask m = glomseg::testing::random_mask(h, w, rng.uniform(), rng);
    const RleOrder order = trial % 2 ? RleOrder::kRowMajor : RleOrder::kColumnMajor;
    const std::string enc = encode_rle(m, order);
    rle_ok += decode_rle(enc, h, w, order) == m && oracle_decode(enc, h, w, order == RleOrder::kColumnMajor) == m;
  }
  r.check(rle_ok == 200, std::to_string(200 - rle_ok) + " RLE round trips");

  int confusion_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const SegMask pred = glomseg::testing::random_mask(16, 16, rng.uniform(), rng);
    const SegMask gt = glomseg::testing::random_mask(16, 16, rng.uniform(), rng);
    ConfusionCounts brute;
    for (std::int64_t y = 0; y < 16; ++y)
      for (std::int64_t x = 0; x < 16; ++x) {
        const int p = pred.at(y, x), g = gt.at(y, x);
        if (p == 1 && g == 1) ++brute.tp;
        if (p == 1 && g == 0) ++brute.fp;
        if (p == 0 && g == 1) ++brute.fn;
        if (p == 0 && g == 0) ++brute.tn;
      }
    confusion_ok += confusion(pred, gt) == brute;
  }
  r.check(confusion_ok == 200, std::to_string(200 - confusion_ok) + " confusion tallies");

  // 2x2 logits: class 0 plane then class 1 plane; targets 0,1,0,1.
  const Var logits(Tensor({1, 2, 2, 2}, {2.0, 0.5, -1.0, 3.0, 0.0, 1.5, 1.0, -2.0}));
  const Tensor targets({1, 2, 2}, {0, 1, 0, 1});
  struct Case {
    std::vector<double> mask;
    double expected;
  };
  const std::vector<Case> cases = {{{1, 1, 1, 1}, 1.893458264523321473888},
                                   {{1, 0, 1, 1}, 2.420190456858354353835},
                                   {{0, 1, 0, 0}, 0.313261687518222834049},
                                   {{0, 0, 0, 0}, 0.0}};
  double worst = 0.0;
  for (const auto& c : cases) {
    const Tensor mask({1, 2, 2}, c.mask);
    worst = std::max(worst, std::fabs(masked_cross_entropy(logits, targets, &mask).value()[0] - c.expected));
  }
  worst = std::max(worst, std::fabs(supervised_loss(logits, targets).value()[0] - cases[0].expected));
  // FixMatch on the same strong logits: pixel 1 is the only unconfident one.
  const Tensor weak({1, 2, 2, 2}, {5.0, 0.0, 5.0, -5.0, 0.0, 0.1, 0.0, 5.0});
  worst = std::max(worst, std::fabs(fixmatch_unsup_loss(weak, logits, 0.95).value()[0] - cases[1].expected));
  r.check(worst < 1e-6, "masked cross-entropy differs from the hand computation by " + sci(worst));
  r.note(std::to_string(rle_ok) + "/200 RLE, " + std::to_string(confusion_ok) + "/200 confusion, CE residual " + sci(worst));
  return r.outcome();
}

// --- 6 ----------------------------------------------------------------------

Outcome gradient_check() {
  Report r;
  ModelConfig mc = segformer_config("tiny");
  mc.embed_dims = {4, 4, 4, 4};
  mc.num_heads = {1, 1, 2, 2};
  mc.depths = {1, 1, 1, 1};
  mc.sr_ratios = {2, 1, 1, 1};
  mc.patch_sizes = {3, 3, 3, 3};
  mc.strides = {1, 1, 2, 1};
  mc.mlp_ratio = 2;
  mc.decoder_dim = 4;
  mc.init_seed = 66;
  auto model = build_model(mc);
  Rng rng(6);
  auto image = [&] {
    Tensor t({2, 3, 4, 4});
    for (auto& v : t.values()) v = rng.normal();
    return t;
  };
  const Tensor x = image(), u_weak = image(), u_s1 = image(), u_s2 = image();
  Tensor y({2, 4, 4});
  for (auto& v : y.values()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  PseudoLabelBatch pseudo;
  {
    NoGradGuard no_grad;
    pseudo = make_pseudo_labels(model->forward(Var(u_weak)).value(), 0.5);
  }
  const double lambda_u = 0.7, w_fp = 0.5;
  auto total_loss = [&] {
    const Var sup = ops::add(supervised_loss(model->forward(Var(x)), y),
                             ops::scale(soft_dice_loss(model->forward(Var(x)), y), 0.3));
    const Var fp = model->forward_feature_perturbed(Var(u_weak), 0.5, 1234);
    const Var unsup = unimatch_unsup_loss(fp, pseudo, model->forward(Var(u_s1)), pseudo, model->forward(Var(u_s2)),
                                          pseudo, w_fp);
    return ops::add(sup, ops::scale(unsup, lambda_u));
  };
  auto params = model->parameters();
  for (auto& p : params) p.zero_grad();
  backward(total_loss());

  std::vector<std::pair<std::size_t, std::size_t>> picks;
  std::size_t total = 0;
  for (const auto& p : params) total += p.value().numel();
  for (int i = 0; i < 20; ++i) {
    std::size_t flat = rng.below(total), t = 0;
    while (flat >= params[t].value().numel()) flat -= params[t++].value().numel();
    picks.emplace_back(t, flat);
  }
  const double h = 1e-6;
  double worst = 0.0;
  int ok = 0;
  for (auto [t, i] : picks) {
    const double analytic = params[t].has_grad() ? params[t].grad()[i] : 0.0;
    Tensor& w = params[t].mutable_value();
    const double orig = w[i];
    double lp, lm;
    {
      NoGradGuard ng;
      w[i] = orig + h;
      lp = total_loss().value()[0];
      w[i] = orig - h;
      lm = total_loss().value()[0];
      w[i] = orig;
    }
    const double numeric = (lp - lm) / (2 * h);
    const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
    const double rel = scale < 1e-9 ? 0.0 : std::fabs(analytic - numeric) / scale;
    worst = std::max(worst, rel);
    ok += rel < 1e-3;
  }
  r.check(ok == 20, std::to_string(20 - ok) + " parameters with relative error >= 1e-3");
  r.note(std::to_string(ok) + "/20 parameters, max relative error " + sci(worst) + " (toy SegFormer, 4x4 inputs, " +
         std::to_string(count_parameters(*model)) + " parameters)");
  return r.outcome();
}

// --- 7 ----------------------------------------------------------------------

double train_dice(SegmentationModel& model, const ImageSet& set) {
  return evaluate(model, set, Aggregation::kMicro, "train", "train").dice;
}

Outcome synthetic_end_to_end() {
  Report r;
  const auto t0 = std::chrono::steady_clock::now();
  FixtureSpec lab;
  lab.n_slides = 2;
  lab.patches_per_slide = 4;
  lab.stain_hi = 0.25;
  lab.seed = 11;
  lab.slide_prefix = "l";
  FixtureSpec unl = lab;
  unl.n_slides = 16;
  unl.with_masks = false;
  unl.stain_hi = 1.0;
  unl.seed = 12;
  unl.slide_prefix = "u";
  FixtureSpec val = lab;
  val.n_slides = 8;
  val.stain_hi = 1.0;
  val.seed = 13;
  val.slide_prefix = "v";
  const ImageSet labeled = synthesize_set(lab), unlabeled = synthesize_set(unl), held_out = synthesize_set(val);

  // Supervised overfit on all 8 labeled patches.
  {
    ModelConfig mc = segformer_config("tiny");
    auto model = build_model(mc);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.batch_size_labeled = 4;
    cfg.epochs = 200;
    std::int64_t reached = -1;
    double best = 0.0;
    TrainOptions opts;
    opts.on_epoch = [&](const EpochStats& e) {
      if (reached > 0 || e.epoch % 5 != 0) return;
      best = std::max(best, train_dice(*model, labeled));
      if (best >= 0.95) reached = e.epoch;
    };
    train(*model, labeled, nullptr, nullptr, cfg, AugmentConfig{}, opts);
    r.check(reached > 0, "supervised overfit peaked at training Dice " + num(best));
    r.note("overfit Dice>=0.95 at epoch " + std::to_string(reached));
  }

  // Two labeled patches, with and without the 64 unlabeled ones.
  int fm_wins = 0, um_wins = 0;
  std::string per_seed;
  bool finite = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<std::size_t> order(labeled.size());
    std::iota(order.begin(), order.end(), 0);
    Rng pick(derive_seed(seed, {77}));
    pick.shuffle(order);
    ImageSet two;
    for (int i = 0; i < 2; ++i) {
      two.ids.push_back(labeled.ids[order[i]]);
      two.images.push_back(labeled.images[order[i]]);
      two.masks.push_back(labeled.masks[order[i]]);
    }
    double dice[3];
    for (Method m : {Method::kSupervised, Method::kFixMatch, Method::kUniMatch}) {
      ModelConfig mc = segformer_config("tiny");
      mc.init_seed = seed;
      auto model = build_model(mc);
      TrainConfig cfg;
      cfg.method = m;
      cfg.lr = 0.01;
      cfg.batch_size_labeled = 2;
      cfg.batch_size_unlabeled = 8;
      cfg.epochs = 100;
      cfg.seed = seed;
      const TrainResult res =
          train(*model, two, m == Method::kSupervised ? nullptr : &unlabeled, nullptr, cfg, AugmentConfig{});
      for (const auto& e : res.history.epochs)
        finite = finite && std::isfinite(e.sup_loss) && std::isfinite(e.unsup_loss);
      dice[static_cast<int>(m)] = evaluate(*model, held_out, Aggregation::kMicro, "held_out", "x").dice;
    }
    fm_wins += dice[1] >= dice[0];
    um_wins += dice[2] >= dice[0];
    per_seed += " seed" + std::to_string(seed) + " sup/fm/um " + num(dice[0], 3) + "/" + num(dice[1], 3) + "/" +
                num(dice[2], 3);
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  r.check(finite, "non-finite loss recorded");
  r.check(fm_wins >= 4, "FixMatch beat the 2-label baseline in only " + std::to_string(fm_wins) + "/5 seeds");
  r.check(um_wins >= 4, "UniMatch beat the 2-label baseline in only " + std::to_string(um_wins) + "/5 seeds");
  r.check(minutes < 15.0, "took " + num(minutes, 1) + " minutes");
  r.note("FixMatch " + std::to_string(fm_wins) + "/5, UniMatch " + std::to_string(um_wins) + "/5;" + per_seed +
         "; " + num(minutes, 1) + " min");
  return r.outcome();
}

// --- 8 ----------------------------------------------------------------------

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

Outcome reproducibility_and_folds() {
  Report r;
  TempDir tmp("accept8");
  const std::string root = tmp.path().string();
  std::string err;
  r.check(cli({"--out", root, "--seed", "3", "make-fixture", "--dir", root + "/fx", "--labeled", "8", "--unlabeled",
               "8", "--validation", "4"}, &err) == 0, "make-fixture: " + err);
  for (const char* run : {"a", "b"}) {
    r.check(cli({"--config", root + "/fx/fixture.cfg", "--out", root, "--seed", "17", "--run-id", run, "--set",
                 "train.epochs=3", "--set", "train.batch_size_unlabeled=4", "train", "--method", "unimatch"}, &err) == 0,
            std::string("train ") + run + ": " + err);
    r.check(cli({"--out", root, "--run-id", std::string("eval_") + run, "evaluate", "--checkpoint",
                 root + "/" + run + "/best.ckpt", "--manifest", root + "/fx/validation.jsonl"}, &err) == 0,
            std::string("evaluate ") + run + ": " + err);
  }
  using glomseg::testing::slurp;
  const std::string ha = slurp(tmp / "a/history.csv"), hb = slurp(tmp / "b/history.csv");
  const std::string ma = slurp(tmp / "eval_a/metrics.csv"), mb = slurp(tmp / "eval_b/metrics.csv");
  r.check(!ha.empty() && ha == hb, "history CSVs differ");
  r.check(!ma.empty() && ma == mb, "metrics CSVs differ");

  // Fifteen slides, four patches each, five folds.
  FixtureSpec spec;
  spec.n_slides = 15;
  spec.patches_per_slide = 4;
  spec.image_size = 32;
  spec.seed = 8;
  write_fixture(tmp / "kidney", spec);
  r.check(cli({"--out", root, "--run-id", "prep", "prepare", "--root", root + "/kidney", "--layout",
               fixture_layout(spec), "--folds", "5"}, &err) == 0,
          "prepare: " + err);
  const DatasetManifest m = read_manifest(tmp / "prep/manifest.jsonl", ManifestRole::kLabeledTrain);
  std::map<std::string, std::set<int>> folds_of_slide;
  for (const auto& rec : m.records) folds_of_slide[rec.wsi_id].insert(m.fold_assignment.at(rec.patch_id));
  bool one_fold_each = folds_of_slide.size() == 15;
  for (const auto& [wsi, folds] : folds_of_slide) one_fold_each = one_fold_each && folds.size() == 1;
  r.check(one_fold_each, "a slide spans several folds");
  bool disjoint = true;
  for (int f = 0; f < 5; ++f) {
    const auto test_wsis = m.select_fold(f, true).wsi_ids();
    const auto train_wsis = m.select_fold(f, false).wsi_ids();
    disjoint = disjoint && test_wsis.size() == 3 && train_wsis.size() == 12;
    for (const auto& w : test_wsis)
      disjoint = disjoint && std::find(train_wsis.begin(), train_wsis.end(), w) == train_wsis.end();
  }
  r.check(disjoint, "train/test slides overlap or folds are unbalanced");
  r.note("history " + std::to_string(ha.size()) + " B and metrics " + std::to_string(ma.size()) +
         " B identical across reruns; 15 slides in 5 WSI-disjoint folds of 3");
  return r.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"published SSL table: Dice matches 2PR/(P+R)", table_consistency},
      {"parameter counts of full-size models", parameter_counts},
      {"loss identities", loss_identities},
      {"augmentation separation", augmentation_separation},
      {"oracle equivalences (RLE, confusion, masked CE)", oracle_equivalences},
      {"gradient check vs central differences", gradient_check},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"reproducibility and WSI-disjoint folds", reproducibility_and_folds},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << ": " << criteria[i].first << " | "
              << o.detail << " [" << num(secs, 1) << "s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

#include <cmath>
#include <limits>

#include "doctest.h"
#include "glomseg/checkpoint.hpp"
#include "glomseg/fixture.hpp"
#include "glomseg/training.hpp"
#include "support.hpp"

using namespace glomseg;
using glomseg::testing::TempDir;

namespace {

ImageSet small_set(int n, bool masks, std::uint64_t seed) {
  FixtureSpec spec;
  spec.image_size = 32;
  spec.n_slides = 1;
  spec.patches_per_slide = n;
  spec.with_masks = masks;
  spec.seed = seed;
  return synthesize_set(spec);
}

TrainConfig quick(Method m, std::int64_t epochs) {
  TrainConfig c;
  c.method = m;
  c.lr = 0.01;
  c.batch_size_labeled = 2;
  c.batch_size_unlabeled = 2;
  c.epochs = epochs;
  c.tau = 0.6;
  return c;
}

}  // namespace

TEST_CASE("sgd momentum arithmetic") {
  Var p(Tensor({2}, std::vector<double>{1.0, -2.0}), true);
  SGD opt({p}, 0.1, 0.9);
  p.node()->grad_buffer() = Tensor({2}, std::vector<double>{1.0, 1.0});
  opt.step();  // v = g, p -= 0.1 * v
  CHECK(p.value()[0] == doctest::Approx(0.9));
  opt.step();  // v = 0.9 * 1 + 1 = 1.9
  CHECK(p.value()[0] == doctest::Approx(0.9 - 0.19));
  opt.zero_grad();
  CHECK((!p.has_grad() || p.grad()[0] == 0.0));
}

TEST_CASE("learning-rate schedules") {
  TrainConfig c;
  c.lr = 0.02;
  CHECK(scheduled_lr(c, 7, 10) == 0.02);
  c.lr_schedule = LrSchedule::kPoly;
  CHECK(scheduled_lr(c, 0, 10) == doctest::Approx(0.02));
  CHECK(scheduled_lr(c, 5, 10) == doctest::Approx(0.02 * std::pow(0.5, 0.9)));
  CHECK(scheduled_lr(c, 9, 10) < scheduled_lr(c, 8, 10));
}

TEST_CASE("config validation and parsing") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.tau = 0.0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.lambda_u = -1;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.lr = 0;
  CHECK_THROWS(c.validate());
  CHECK(parse_method("unimatch") == Method::kUniMatch);
  CHECK_THROWS(parse_method("meanteacher"));
  CHECK(parse_lr_schedule("poly") == LrSchedule::kPoly);
}

TEST_CASE("history has one finite entry per epoch and checkpoints are written") {
  TempDir dir("train");
  const ImageSet labeled = small_set(4, true, 1);
  const ImageSet unlabeled = small_set(4, false, 2);
  auto model = build_model(segformer_config("tiny"));
  TrainOptions opts;
  opts.run_dir = dir.path();
  const auto r = train(*model, labeled, &unlabeled, nullptr, quick(Method::kUniMatch, 3), AugmentConfig{}, opts);
  REQUIRE(r.history.epochs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& e = r.history.epochs[i];
    CHECK(e.epoch == static_cast<std::int64_t>(i + 1));
    CHECK(std::isfinite(e.sup_loss));
    CHECK(std::isfinite(e.unsup_loss));
    CHECK(e.retention >= 0.0);
    CHECK(e.retention <= 1.0);
  }
  CHECK(std::filesystem::exists(r.last_checkpoint));
  CHECK(std::filesystem::exists(r.best_checkpoint));
  for (int e = 1; e <= 3; ++e) CHECK(std::filesystem::exists(dir / ("epoch_" + std::to_string(e) + ".ckpt")));
  const auto loaded = load_checkpoint(r.best_checkpoint);
  const auto a = model->parameters(), b = loaded.model->parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value() == b[i].value());
}

TEST_CASE("seeded training is reproducible") {
  const ImageSet labeled = small_set(4, true, 3);
  const ImageSet unlabeled = small_set(4, false, 4);
  auto run = [&] {
    auto model = build_model(segformer_config("tiny"));
    train(*model, labeled, &unlabeled, nullptr, quick(Method::kFixMatch, 2), AugmentConfig{});
    return model->parameters();
  };
  const auto a = run(), b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value() == b[i].value());
}

TEST_CASE("supervised loss falls on a small synthetic set") {
  const ImageSet labeled = small_set(4, true, 5);
  auto model = build_model(segformer_config("tiny"));
  AugmentConfig aug;
  aug.weak = WeakAugSpec::identity();
  const auto r = train(*model, labeled, nullptr, nullptr, quick(Method::kSupervised, 20), aug);
  REQUIRE(r.history.epochs.size() == 20);
  CHECK(r.history.epochs.back().sup_loss < 0.7 * r.history.epochs.front().sup_loss);
}

TEST_CASE("precondition and divergence errors") {
  const ImageSet labeled = small_set(2, true, 6);
  auto model = build_model(segformer_config("tiny"));
  CHECK_THROWS_AS(train(*model, labeled, nullptr, nullptr, quick(Method::kUniMatch, 1), AugmentConfig{}),
                  std::invalid_argument);
  auto big = quick(Method::kSupervised, 1);
  big.batch_size_labeled = 3;
  CHECK_THROWS_AS(train(*model, labeled, nullptr, nullptr, big, AugmentConfig{}), std::invalid_argument);

  model->parameters().front().mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(*model, labeled, nullptr, nullptr, quick(Method::kSupervised, 2), AugmentConfig{});
    FAIL("expected training to abort");
  } catch (const TrainingAborted& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("sup") != std::string::npos);
  }
}

TEST_CASE("history csv is stable and omits timing") {
  TempDir dir("hist");
  TrainHistory h;
  h.epochs.push_back({1, 0.5, 0.25, 0.75, 0.01, 3.0, -1.0});
  h.epochs.push_back({2, 0.4, 0.125, 0.8, 0.01, 2.0, -1.0});
  write_history_csv(dir / "h.csv", h);
  CHECK(glomseg::testing::slurp(dir / "h.csv") ==
        "epoch,sup_loss,unsup_loss,retention,lr\n1,0.5,0.25,0.75,0.01\n2,0.4,0.125,0.8,0.01\n");
}

TEST_CASE("switching off feature perturbation equals a zero stream weight") {
  const ImageSet labeled = small_set(4, true, 7);
  const ImageSet unlabeled = small_set(4, false, 8);
  auto run = [&](bool fp, double w_fp) {
    auto model = build_model(segformer_config("tiny"));
    auto cfg = quick(Method::kUniMatch, 2);
    cfg.feature_perturbation = fp;
    cfg.w_fp = w_fp;
    train(*model, labeled, &unlabeled, nullptr, cfg, AugmentConfig{});
    return model->parameters();
  };
  const auto off = run(false, 0.5), zero = run(true, 0.0), on = run(true, 0.5);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < off.size(); ++i) {
    same = same && off[i].value() == zero[i].value();
    differs = differs || !(off[i].value() == on[i].value());
  }
  CHECK(same);
  CHECK(differs);
}

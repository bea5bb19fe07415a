#include <cmath>
#include <string>

#include "doctest.h"
#include "glomseg/models.hpp"
#include "reference_tables.hpp"

using namespace glomseg;

namespace {

Tensor random_images(std::int64_t b, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({b, 3, h, w});
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("linear layer parameter count") {
  Rng rng(0);
  nn::Linear lin(4, 3, rng);
  CHECK(lin.parameter_count() == 15);
  nn::Linear nobias(4, 3, rng, false);
  CHECK(nobias.parameter_count() == 12);
}

TEST_CASE("segformer b0 and b1 parameter counts") {
  // Exact counts of the reference two-class implementation.
  const std::pair<const char*, std::int64_t> exact[] = {{"b0", 3714658}, {"b1", 13677762}};
  for (const auto& [name, count] : exact) {
    CAPTURE(name);
    auto model = build_model(segformer_config(name));
    CHECK(count_parameters(*model) == count);
    for (const auto& row : reference::kParamCounts)
      if (row.model == name) CHECK(std::round(static_cast<double>(count) / 1e5) / 10 == doctest::Approx(row.millions));
  }
}

TEST_CASE("output logits keep the input resolution") {
  for (auto mc : {segformer_config("tiny"), attention_unet_config("tiny")}) {
    CAPTURE(std::string(to_string(mc.arch)));
    auto model = build_model(mc);
    Var y = model->forward(Var(random_images(2, 32, 64, 1)));
    CHECK(y.shape() == Shape{2, 2, 32, 64});
    for (double v : y.value().values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("inputs that are not multiples of the downsampling factor are rejected") {
  auto model = build_model(segformer_config("tiny"));
  const auto f = model->config().downsampling_factor();
  CHECK(f == 32);
  try {
    model->forward(Var(random_images(1, 48, 64, 1)));
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("multiples of 32") != std::string::npos);
  }
  auto unet = build_model(attention_unet_config("tiny"));
  CHECK(unet->config().downsampling_factor() == 16);
  CHECK_THROWS_AS(unet->forward(Var(random_images(1, 24, 32, 1))), std::invalid_argument);
  CHECK_NOTHROW(unet->forward(Var(random_images(1, 16, 32, 1))));
}

TEST_CASE("invalid configs and unknown variants throw") {
  CHECK_THROWS_AS(segformer_config("b9"), std::invalid_argument);
  CHECK_THROWS_AS(attention_unet_config("huge"), std::invalid_argument);
  CHECK_THROWS_AS(parse_architecture("resnet"), std::invalid_argument);
  auto mc = segformer_config("tiny");
  mc.num_heads = {3, 1, 2, 2};  // 8 channels do not split into 3 heads
  CHECK_THROWS_AS(mc.validate(), std::invalid_argument);
  mc = segformer_config("tiny");
  mc.num_classes = 1;
  CHECK_THROWS_AS(mc.validate(), std::invalid_argument);
}

TEST_CASE("construction is deterministic in the init seed") {
  auto a = segformer_config("tiny");
  auto b = a;
  auto c = a;
  c.init_seed = 7;
  auto ma = build_model(a), mb = build_model(b), mc = build_model(c);
  const auto pa = ma->parameters(), pb = mb->parameters(), pc = mc->parameters();
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && pa[i].value() == pb[i].value();
    any_diff = any_diff || !(pa[i].value() == pc[i].value());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("feature perturbation approaches the plain forward as the rate goes to zero") {
  auto model = build_model(segformer_config("tiny"));
  model->set_training(false);
  Var x(random_images(2, 32, 32, 3));
  const Tensor plain = model->forward(x).value();
  const Tensor fp = model->forward_feature_perturbed(x, 1e-9, 5).value();
  CHECK(max_abs_diff(plain, fp) < 1e-9);
  const Tensor strong = model->forward_feature_perturbed(x, 0.5, 5).value();
  CHECK(max_abs_diff(plain, strong) > 1e-6);
  CHECK_THROWS_AS(model->forward_feature_perturbed(x, 0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(model->forward_feature_perturbed(x, 1.0, 5), std::invalid_argument);
}

TEST_CASE("channel dropout is unbiased over seeds") {
  Tensor f({2, 4, 3, 3}, 0.0);
  for (std::size_t i = 0; i < f.numel(); ++i) f[i] = 0.1 * static_cast<double>(i) - 1.0;
  Tensor acc(f.shape(), 0.0);
  const int n = 4000;
  for (int s = 0; s < n; ++s) acc.add_(channel_dropout(Var(f), 0.5, static_cast<std::uint64_t>(s)).value());
  double worst = 0;
  for (std::size_t i = 0; i < f.numel(); ++i)
    if (std::abs(f[i]) > 0.05) worst = std::max(worst, std::abs(acc[i] / n / f[i] - 1.0));
  // Each factor is 0 or 2, so the relative error of the mean has std 1/sqrt(n) ~ 0.016.
  CHECK(worst < 0.08);

  const Tensor k = channel_dropout_factors(3, 5, 0.25, 11);
  for (double v : k.values()) CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15));
  CHECK(channel_dropout_factors(3, 5, 0.25, 11) == k);
}

TEST_CASE("eval-mode predictions are equivariant to batch permutation") {
  auto model = build_model(segformer_config("tiny"));
  model->set_training(false);
  Tensor x = random_images(3, 32, 32, 8);
  Tensor swapped(x.shape());
  const std::int64_t per = 3 * 32 * 32;
  const int order[3] = {2, 0, 1};
  for (int b = 0; b < 3; ++b)
    std::copy_n(x.ptr() + order[b] * per, per, swapped.ptr() + b * per);
  const Tensor y = model->forward(Var(x)).value();
  const Tensor ys = model->forward(Var(swapped)).value();
  const std::int64_t out_per = 2 * 32 * 32;
  double worst = 0;
  for (int b = 0; b < 3; ++b)
    for (std::int64_t i = 0; i < out_per; ++i)
      worst = std::max(worst, std::abs(ys[static_cast<std::size_t>(b * out_per + i)] -
                                       y[static_cast<std::size_t>(order[b] * out_per + i)]));
  CHECK(worst < 1e-12);
}

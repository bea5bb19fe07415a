#include <cstdlib>

#include "doctest.h"
#include "glomseg/checkpoint.hpp"
#include "glomseg/config.hpp"
#include "support.hpp"

using namespace glomseg;
using glomseg::testing::TempDir;

namespace {

struct EnvVar {
  EnvVar(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~EnvVar() { ::unsetenv(name_); }
  const char* name_;
};

}  // namespace

TEST_CASE("every key has a documented default") {
  for (const auto& k : config_keys()) {
    CAPTURE(k.name);
    CHECK_FALSE(k.doc.empty());
  }
  CHECK(is_config_key("train.lr"));
  CHECK(is_config_key("augment.weak.crop_size"));
  CHECK(is_config_key("augment.strong.cutmix_prob"));
  CHECK_FALSE(is_config_key("train.lr_typo"));
}

TEST_CASE("config text parsing") {
  const auto v = parse_config_text("# comment\ntrain.lr = 0.5  # trailing\n\nmodel.variant=tiny\n");
  CHECK(v.at("train.lr") == "0.5");
  CHECK(v.at("model.variant") == "tiny");
  try {
    parse_config_text("train.learning_rate = 1\n");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.lr") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("just words\n"), ConfigError);
}

TEST_CASE("layer precedence: defaults, file, environment, command line") {
  CHECK(resolve_config({}).train.lr == 1e-4);
  const ConfigValues file{{"train.lr", "0.1"}, {"train.epochs", "3"}};
  CHECK(resolve_config({file}).train.lr == 0.1);
  EnvVar env("GLOMSEG_TRAIN__LR", "0.2");
  const ConfigValues envv = env_overrides();
  CHECK(envv.at("train.lr") == "0.2");
  const auto cli = parse_assignments({"train.lr=0.3"});
  CHECK(resolve_config({file, envv}).train.lr == 0.2);
  const RunConfig all = resolve_config({file, envv, cli});
  CHECK(all.train.lr == 0.3);
  CHECK(all.train.epochs == 3);
  CHECK(env_var_for_key("augment.weak.crop_size") == "GLOMSEG_AUGMENT__WEAK__CROP_SIZE");
}

TEST_CASE("unknown environment keys are rejected") {
  EnvVar env("GLOMSEG_TRAIN__NOPE", "1");
  CHECK_THROWS_AS(env_overrides(), ConfigError);
}

TEST_CASE("bad values are rejected with the key named") {
  try {
    resolve_config({{{"train.epochs", "many"}}});
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.epochs") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve_config({{{"augment.preset", "wild"}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{{"train.tau", "1.5"}}}), ConfigError);
}

TEST_CASE("augmentation presets fill keys not set explicitly") {
  CHECK(resolve_config({}).augment.strong.cutmix_prob == 0.5);
  CHECK(resolve_config({{{"augment.preset", "paper-faithful"}}}).augment.strong.cutmix_prob == 0.0);
  const auto mixed = resolve_config({{{"augment.preset", "paper-faithful"}, {"augment.strong.cutmix_prob", "0.25"}}});
  CHECK(mixed.augment.strong.cutmix_prob == 0.25);
  CHECK(resolve_config({{{"augment.weak.rotations", "0,180"}}}).augment.weak.rotation_choices == std::vector<int>{0, 180});
}

TEST_CASE("resolved snapshot round-trips") {
  const RunConfig a = resolve_config({{{"train.lr", "0.03"},
                                       {"model.variant", "tiny"},
                                       {"augment.preset", "paper-faithful"},
                                       {"ablate.fractions", "1/2,1"},
                                       {"seed", "17"}}});
  const std::string snap = config_snapshot(a);
  const RunConfig b = resolve_config({parse_config_text(snap)});
  CHECK(config_snapshot(b) == snap);
  CHECK(b.seed == 17);
  CHECK(b.train.lr == 0.03);
  CHECK(b.model.variant == "tiny");
}

TEST_CASE("checkpoint round trip and architecture mismatch") {
  TempDir dir("ckpt");
  auto mc = segformer_config("tiny");
  mc.init_seed = 3;
  auto model = build_model(mc);
  save_checkpoint(dir / "m.ckpt", *model, {{"method", "unimatch"}});
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.meta.at("method") == "unimatch");
  CHECK(loaded.model->config().variant == "tiny");
  const auto a = model->named_parameters(), b = loaded.model->named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.value() == b[i].second.value());
  }
  CHECK(parse_model_config(serialize_model_config(mc)).embed_dims == mc.embed_dims);

  auto other = build_model(attention_unet_config("tiny"));
  CHECK_THROWS_AS(load_weights(dir / "m.ckpt", *other), CheckpointError);
  auto small = build_model(segformer_config("small"));
  CHECK_THROWS_AS(load_weights(dir / "m.ckpt", *small), CheckpointError);
  auto same = build_model(segformer_config("tiny"));
  CHECK_NOTHROW(load_weights(dir / "m.ckpt", *same));

  glomseg::testing::TempDir junk("junk");
  { std::ofstream(junk / "bad.ckpt") << "not a checkpoint"; }
  CHECK_THROWS_AS(load_checkpoint(junk / "bad.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(junk / "missing.ckpt"), CheckpointError);
}

TEST_CASE("feature perturbation switch") {
  CHECK(resolve_config({}).train.feature_perturbation);
  CHECK_FALSE(resolve_config({{{"train.fp_mode", "off"}}}).train.feature_perturbation);
  CHECK_THROWS_AS(resolve_config({{{"train.fp_mode", "image"}}}), ConfigError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "iconpeft/config.hpp"

using namespace iconpeft;
using nlohmann::json;

TEST_CASE("defaults: an empty document is the tiny synthetic icon setup") {
  const RunConfig cfg = RunConfig::from_json(json::object());
  CHECK(cfg.model.embed_dim == 64);
  CHECK(cfg.model.depth == 4);
  CHECK(cfg.recipe.kind == AdapterKind::Icon);
  CHECK(cfg.recipe.bottleneck_dim == 64);
  CHECK(cfg.recipe.kernel_size == 3);
  CHECK(cfg.recipe.eq6_literal);
  CHECK(cfg.train.learning_rate == doctest::Approx(1e-3));
  CHECK(cfg.data.kind == DatasetKind::Synthetic);
  CHECK(cfg.precision == Precision::F32);
}

TEST_CASE("model presets") {
  const ViTConfig tiny = model_preset("tiny");
  CHECK(tiny.image_size == 32);
  CHECK(tiny.patch_size == 4);
  CHECK(tiny.tokens() == 64);
  const ViTConfig vitb = model_preset("vitb-like");
  CHECK(vitb.embed_dim == 768);
  CHECK(vitb.depth == 12);
  CHECK(vitb.num_heads == 12);
  CHECK(vitb.image_size == 224);
  CHECK(vitb.num_classes == 100);
  CHECK_THROWS_AS((void)model_preset("huge"), ConfigError);

  // Preset as a plain string, and preset-with-overrides.
  CHECK(RunConfig::from_json({{"model", "vitb-like"}}).model.embed_dim == 768);
  const RunConfig over = RunConfig::from_json(
      {{"model", {{"preset", "tiny"}, {"embed_dim", 32}, {"num_heads", 2}}}});
  CHECK(over.model.embed_dim == 32);
  CHECK(over.model.image_size == 32);
}

TEST_CASE("unknown keys are rejected with the offending path") {
  try {
    (void)RunConfig::from_json({{"model", {{"embed_dims", 64}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.embed_dims") != std::string::npos);
  }
  CHECK_THROWS_AS((void)RunConfig::from_json({{"modle", json::object()}}),
                  ConfigError);
  CHECK_THROWS_AS((void)RunConfig::from_json({{"recipe", {{"rank", 4}}}}),
                  ConfigError);
}

TEST_CASE("validation failures surface as ConfigError") {
  CHECK_THROWS_AS(
      (void)RunConfig::from_json({{"model", {{"patch_size", 5}}}}),
      ConfigError);  // 32 % 5 != 0
  CHECK_THROWS_AS(
      (void)RunConfig::from_json({{"recipe", {{"kernel_size", 4}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      (void)RunConfig::from_json({{"train", {{"learning_rate", -1.0}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      (void)RunConfig::from_json({{"precision", "f16"}}), ConfigError);
  CHECK_THROWS_AS(
      (void)RunConfig::from_json({{"init_scope", "adapters"}}), ConfigError);
}

TEST_CASE("full fine-tuning defaults to the reduced learning rate") {
  const RunConfig peft = RunConfig::from_json({{"recipe", {{"kind", "icon"}}}});
  CHECK(peft.train.learning_rate == doctest::Approx(1e-3));
  const RunConfig full = RunConfig::from_json({{"recipe", {{"kind", "full"}}}});
  CHECK(full.train.learning_rate == doctest::Approx(1e-4));
  const RunConfig expl = RunConfig::from_json(
      {{"recipe", {{"kind", "full"}}}, {"train", {{"learning_rate", 0.05}}}});
  CHECK(expl.train.learning_rate == doctest::Approx(0.05));
}

TEST_CASE("config hash is canonical and sensitive") {
  const RunConfig a = RunConfig::from_json({{"recipe", {{"kind", "icon"}}}});
  const RunConfig b = RunConfig::from_json({{"recipe", {{"kind", "icon"}}}});
  CHECK(a.config_hash() == b.config_hash());
  const RunConfig c = RunConfig::from_json({{"recipe", {{"kind", "lora"}}}});
  CHECK(a.config_hash() != c.config_hash());
}

TEST_CASE("round-trip through to_json") {
  json doc = {{"model", "tiny"},
              {"recipe", {{"kind", "icon"}, {"kernel_size", 5}}},
              {"train", {{"epochs", 2}, {"seed", 9}}},
              {"data", {{"kind", "synthetic"}, {"num_classes", 8}}},
              {"output_dir", "runs/x"},
              {"precision", "f64"}};
  const RunConfig cfg = RunConfig::from_json(doc);
  const RunConfig again = RunConfig::from_json(cfg.to_json());
  CHECK(again.recipe.kernel_size == 5);
  CHECK(again.train.seed == 9);
  CHECK(again.precision == Precision::F64);
  CHECK(cfg.config_hash() == again.config_hash());
}

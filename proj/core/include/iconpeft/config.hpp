#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "iconpeft/adapters.hpp"
#include "iconpeft/checkpoint.hpp"
#include "iconpeft/data.hpp"
#include "iconpeft/trainer.hpp"
#include "iconpeft/vit.hpp"

namespace iconpeft {

enum class Precision { F32, F64 };

Precision precision_from_string(std::string_view s);
const char* to_string(Precision p);

// One JSON document describing a whole run. Unknown keys are rejected with
// the offending path; every field has a default (the tiny synthetic setup).
struct RunConfig {
  ViTConfig model;
  AdapterRecipe recipe;
  TrainConfig train;
  DatasetSource data;
  std::string output_dir = "runs/out";
  Precision precision = Precision::F32;
  std::string init_checkpoint;  // manifest path; empty = fresh init
  LoadScope init_scope = LoadScope::All;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;  // fully resolved, canonical
  std::string config_hash() const;
};

// Built-in model presets: "tiny" for training/gradient suites, "vitb-like"
// for parameter accounting.
ViTConfig model_preset(std::string_view name);

nlohmann::json recipe_to_json(const AdapterRecipe& r);
AdapterRecipe recipe_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json vit_config_to_json(const ViTConfig& c);

}  // namespace iconpeft

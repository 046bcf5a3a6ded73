#include "iconpeft/config.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace iconpeft {

Precision precision_from_string(std::string_view s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ConfigError("precision must be 'f32' or 'f64', got '" + std::string(s) + "'");
}

const char* to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

ViTConfig model_preset(std::string_view name) {
  ViTConfig c;
  if (name == "tiny") {
    c.image_size = 32;
    c.patch_size = 4;
    c.in_channels = 3;
    c.embed_dim = 64;
    c.depth = 4;
    c.num_heads = 4;
    c.mlp_ratio = 4.0;
    c.num_classes = 8;
    return c;
  }
  if (name == "vitb-like") {
    c.image_size = 224;
    c.patch_size = 16;
    c.in_channels = 3;
    c.embed_dim = 768;
    c.depth = 12;
    c.num_heads = 12;
    c.mlp_ratio = 4.0;
    c.num_classes = 100;
    return c;
  }
  throw ConfigError("unknown model preset '" + std::string(name) +
                    "' (known: tiny, vitb-like)");
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError("config: '" + path + "' must be a JSON object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config: unknown key '" +
                        (path.empty() ? it.key() : path + "." + it.key()) + "'");
    }
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + path + "." + key + "'");
  }
}

std::vector<double> get_double_list(const json& j, const char* key,
                                    const std::string& path) {
  if (!j.contains(key)) return {};
  try {
    return j.at(key).get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + path + "." + key + "' must be a number list");
  }
}

ViTConfig model_from_json(const json& j) {
  if (j.is_string()) return model_preset(j.get<std::string>());
  reject_unknown_keys(j, "model",
                      {"preset", "image_size", "patch_size", "in_channels",
                       "embed_dim", "depth", "num_heads", "mlp_ratio",
                       "num_classes", "ln_eps"});
  ViTConfig c;
  if (j.contains("preset")) c = model_preset(j.at("preset").get<std::string>());
  c.image_size = get_or<int64_t>(j, "image_size", c.image_size, "model");
  c.patch_size = get_or<int64_t>(j, "patch_size", c.patch_size, "model");
  c.in_channels = get_or<int64_t>(j, "in_channels", c.in_channels, "model");
  c.embed_dim = get_or<int64_t>(j, "embed_dim", c.embed_dim, "model");
  c.depth = get_or<int64_t>(j, "depth", c.depth, "model");
  c.num_heads = get_or<int64_t>(j, "num_heads", c.num_heads, "model");
  c.mlp_ratio = get_or<double>(j, "mlp_ratio", c.mlp_ratio, "model");
  c.num_classes = get_or<int64_t>(j, "num_classes", c.num_classes, "model");
  c.ln_eps = get_or<double>(j, "ln_eps", c.ln_eps, "model");
  c.validate();
  return c;
}

TrainConfig train_from_json(const json& j, double default_lr) {
  reject_unknown_keys(j, "train",
                      {"epochs", "batch_size", "learning_rate", "weight_decay",
                       "beta1", "beta2", "eps", "seed", "grad_clip"});
  TrainConfig t;
  t.learning_rate = default_lr;
  t.epochs = get_or<int64_t>(j, "epochs", t.epochs, "train");
  t.batch_size = get_or<int64_t>(j, "batch_size", t.batch_size, "train");
  t.learning_rate = get_or<double>(j, "learning_rate", t.learning_rate, "train");
  t.weight_decay = get_or<double>(j, "weight_decay", t.weight_decay, "train");
  t.beta1 = get_or<double>(j, "beta1", t.beta1, "train");
  t.beta2 = get_or<double>(j, "beta2", t.beta2, "train");
  t.eps = get_or<double>(j, "eps", t.eps, "train");
  t.seed = get_or<uint64_t>(j, "seed", t.seed, "train");
  t.grad_clip = get_or<double>(j, "grad_clip", t.grad_clip, "train");
  t.validate();
  return t;
}

DatasetSource data_from_json(const json& j) {
  reject_unknown_keys(
      j, "data",
      {"kind", "num_classes", "mean", "std", "synth_seed", "synth_n_train",
       "synth_n_val", "synth_label_mode", "idx_train_images", "idx_train_labels",
       "idx_val_images", "idx_val_labels", "cifar_train_files", "cifar_val_files"});
  DatasetSource d;
  d.kind = dataset_kind_from_string(
      get_or<std::string>(j, "kind", "synthetic", "data"));
  d.num_classes = get_or<int64_t>(j, "num_classes", d.num_classes, "data");
  d.norm.mean = get_double_list(j, "mean", "data");
  d.norm.stdev = get_double_list(j, "std", "data");
  if (d.norm.mean.size() != d.norm.stdev.size()) {
    throw ConfigError("config: data.mean and data.std must have equal length");
  }
  d.synth_seed = get_or<uint64_t>(j, "synth_seed", d.synth_seed, "data");
  d.synth_n_train = get_or<int64_t>(j, "synth_n_train", d.synth_n_train, "data");
  d.synth_n_val = get_or<int64_t>(j, "synth_n_val", d.synth_n_val, "data");
  d.synth_label_mode = synth_label_mode_from_string(
      get_or<std::string>(j, "synth_label_mode", "joint", "data"));
  d.idx_train_images = get_or<std::string>(j, "idx_train_images", "", "data");
  d.idx_train_labels = get_or<std::string>(j, "idx_train_labels", "", "data");
  d.idx_val_images = get_or<std::string>(j, "idx_val_images", "", "data");
  d.idx_val_labels = get_or<std::string>(j, "idx_val_labels", "", "data");
  d.cifar_train_files =
      get_or<std::vector<std::string>>(j, "cifar_train_files", {}, "data");
  d.cifar_val_files =
      get_or<std::vector<std::string>>(j, "cifar_val_files", {}, "data");
  return d;
}

json data_to_json(const DatasetSource& d) {
  json j;
  j["kind"] = to_string(d.kind);
  j["num_classes"] = d.num_classes;
  if (!d.norm.mean.empty()) {
    j["mean"] = d.norm.mean;
    j["std"] = d.norm.stdev;
  }
  if (d.kind == DatasetKind::Synthetic) {
    j["synth_seed"] = d.synth_seed;
    j["synth_n_train"] = d.synth_n_train;
    j["synth_n_val"] = d.synth_n_val;
    j["synth_label_mode"] = to_string(d.synth_label_mode);
  }
  if (d.kind == DatasetKind::IdxFiles) {
    j["idx_train_images"] = d.idx_train_images;
    j["idx_train_labels"] = d.idx_train_labels;
    if (!d.idx_val_images.empty()) {
      j["idx_val_images"] = d.idx_val_images;
      j["idx_val_labels"] = d.idx_val_labels;
    }
  }
  if (d.kind == DatasetKind::CifarBinary) {
    j["cifar_train_files"] = d.cifar_train_files;
    j["cifar_val_files"] = d.cifar_val_files;
  }
  return j;
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.learning_rate;
  j["weight_decay"] = t.weight_decay;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["eps"] = t.eps;
  j["seed"] = t.seed;
  j["grad_clip"] = t.grad_clip;
  return j;
}

}  // namespace

AdapterRecipe recipe_from_json(const nlohmann::json& j, const std::string& path) {
  reject_unknown_keys(j, path,
                      {"kind", "bottleneck_dim", "kernel_size", "placement",
                       "gamma_init", "eq6_literal", "lora_rank"});
  AdapterRecipe r;
  r.kind = adapter_kind_from_string(get_or<std::string>(j, "kind", "icon", path));
  r.bottleneck_dim = get_or<int64_t>(j, "bottleneck_dim", r.bottleneck_dim, path);
  r.kernel_size = get_or<int64_t>(j, "kernel_size", r.kernel_size, path);
  r.placement = placement_from_string(
      get_or<std::string>(j, "placement", "sequential", path));
  r.gamma_init = get_or<double>(j, "gamma_init", r.gamma_init, path);
  r.eq6_literal = get_or<bool>(j, "eq6_literal", r.eq6_literal, path);
  r.lora_rank = get_or<int64_t>(j, "lora_rank", r.lora_rank, path);
  for (const std::string& w : r.validate()) {
    std::cerr << "warning: " << w << "\n";
  }
  return r;
}

nlohmann::json recipe_to_json(const AdapterRecipe& r) {
  json j;
  j["kind"] = to_string(r.kind);
  j["bottleneck_dim"] = r.bottleneck_dim;
  j["kernel_size"] = r.kernel_size;
  j["placement"] = to_string(r.placement);
  j["gamma_init"] = r.gamma_init;
  j["eq6_literal"] = r.eq6_literal;
  j["lora_rank"] = r.lora_rank;
  return j;
}

nlohmann::json vit_config_to_json(const ViTConfig& c) {
  json j;
  j["image_size"] = c.image_size;
  j["patch_size"] = c.patch_size;
  j["in_channels"] = c.in_channels;
  j["embed_dim"] = c.embed_dim;
  j["depth"] = c.depth;
  j["num_heads"] = c.num_heads;
  j["mlp_ratio"] = c.mlp_ratio;
  j["num_classes"] = c.num_classes;
  j["ln_eps"] = c.ln_eps;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, "",
                      {"model", "recipe", "train", "data", "output_dir",
                       "precision", "init_checkpoint", "init_scope"});
  RunConfig c;
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  if (j.contains("recipe")) c.recipe = recipe_from_json(j.at("recipe"), "recipe");
  // Full fine-tuning defaults to a 10x smaller learning rate; the PEFT
  // recipes keep 1e-3.
  const double default_lr = c.recipe.kind == AdapterKind::Full ? 1e-4 : 1e-3;
  c.train.learning_rate = default_lr;
  if (j.contains("train")) c.train = train_from_json(j.at("train"), default_lr);
  if (j.contains("data")) c.data = data_from_json(j.at("data"));
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir, "");
  c.precision =
      precision_from_string(get_or<std::string>(j, "precision", "f32", ""));
  c.init_checkpoint = get_or<std::string>(j, "init_checkpoint", "", "");
  const std::string scope = get_or<std::string>(j, "init_scope", "all", "");
  if (scope == "all") {
    c.init_scope = LoadScope::All;
  } else if (scope == "backbone") {
    c.init_scope = LoadScope::BackboneOnly;
  } else {
    throw ConfigError("config: init_scope must be 'all' or 'backbone'");
  }
  c.model.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["model"] = vit_config_to_json(model);
  j["recipe"] = recipe_to_json(recipe);
  j["train"] = train_to_json(train);
  j["data"] = data_to_json(data);
  j["output_dir"] = output_dir;
  j["precision"] = to_string(precision);
  if (!init_checkpoint.empty()) {
    j["init_checkpoint"] = init_checkpoint;
    j["init_scope"] = init_scope == LoadScope::All ? "all" : "backbone";
  }
  return j;
}

std::string RunConfig::config_hash() const {
  const std::string canon = to_json().dump();
  std::ostringstream os;
  os << std::hex << fnv1a64(canon);
  return os.str();
}

}  // namespace iconpeft

#include "iconpeft/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "iconpeft/config.hpp"

namespace iconpeft {

namespace {

using nlohmann::json;

template <class S>
const char* dtype_name() {
  return sizeof(S) == 4 ? "f32" : "f64";
}

json load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest " + path + " is not valid JSON: " +
                    e.what());
  }
  return j;
}

}  // namespace

template <class S>
void save_checkpoint(const VisionTransformer<S>& model,
                     const std::string& manifest_path,
                     const std::string& blob_path,
                     const std::string& config_hash) {
  json manifest;
  manifest["format"] = "icon-peft-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = dtype_name<S>();
  manifest["config_hash"] = config_hash;
  manifest["model"] = vit_config_to_json(model.config());
  manifest["recipe"] = recipe_to_json(model.recipe());

  json params = json::array();
  int64_t offset = 0;
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw DataError("cannot write checkpoint blob " + blob_path);
  for (const auto& e : model.registry().entries()) {
    json p;
    p["name"] = e.name;
    p["shape"] = e.tensor.shape();
    p["trainable"] = e.trainable;
    p["offset"] = offset;
    p["count"] = e.tensor.numel();
    params.push_back(std::move(p));
    blob.write(reinterpret_cast<const char*>(e.tensor.data_ptr()),
               static_cast<std::streamsize>(e.tensor.numel() * sizeof(S)));
    offset += e.tensor.numel() * static_cast<int64_t>(sizeof(S));
  }
  manifest["params"] = std::move(params);
  if (!blob) throw DataError("short write to checkpoint blob " + blob_path);
  blob.close();

  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write checkpoint manifest " + manifest_path);
  out << manifest.dump(2) << "\n";
}

template <class S>
void load_checkpoint(VisionTransformer<S>& model,
                     const std::string& manifest_path,
                     const std::string& blob_path, LoadScope scope) {
  const json manifest = load_manifest(manifest_path);
  if (manifest.value("format", "") != "icon-peft-checkpoint") {
    throw DataError(manifest_path + " is not an icon-peft checkpoint manifest");
  }
  const std::string dtype = manifest.value("dtype", "");
  if (dtype != dtype_name<S>()) {
    throw DataError("checkpoint dtype " + dtype + " does not match model dtype " +
                    dtype_name<S>());
  }

  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw DataError("cannot open checkpoint blob " + blob_path);

  auto& reg = model.registry();
  size_t loaded = 0;
  for (const auto& p : manifest.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const Shape shape = p.at("shape").get<Shape>();
    const int64_t offset = p.at("offset").get<int64_t>();
    const int64_t count = p.at("count").get<int64_t>();
    ParamEntry<S>* entry = reg.find(name);
    if (!entry) {
      if (scope == LoadScope::BackboneOnly) continue;
      throw DataError("checkpoint parameter '" + name +
                      "' does not exist in the model");
    }
    if (scope == LoadScope::BackboneOnly && entry->owner != ParamOwner::Backbone) {
      continue;
    }
    if (entry->tensor.shape() != shape) {
      throw DataError("checkpoint parameter '" + name + "' has shape " +
                      shape_str(shape) + " but the model expects " +
                      shape_str(entry->tensor.shape()));
    }
    if (count != entry->tensor.numel()) {
      throw DataError("checkpoint parameter '" + name + "' has bad count");
    }
    blob.seekg(offset);
    blob.read(reinterpret_cast<char*>(entry->tensor.data_ptr()),
              static_cast<std::streamsize>(count * sizeof(S)));
    if (!blob) throw DataError("short read from checkpoint blob " + blob_path);
    ++loaded;
  }
  if (scope == LoadScope::All && loaded != reg.entries().size()) {
    throw DataError("checkpoint does not cover every model parameter (" +
                    std::to_string(loaded) + " of " +
                    std::to_string(reg.entries().size()) + ")");
  }
}

#define ICONPEFT_INSTANTIATE_CHECKPOINT(S)                                  \
  template void save_checkpoint<S>(const VisionTransformer<S>&,             \
                                   const std::string&, const std::string&,  \
                                   const std::string&);                     \
  template void load_checkpoint<S>(VisionTransformer<S>&, const std::string&, \
                                   const std::string&, LoadScope);

ICONPEFT_INSTANTIATE_CHECKPOINT(float)
ICONPEFT_INSTANTIATE_CHECKPOINT(double)

}  // namespace iconpeft

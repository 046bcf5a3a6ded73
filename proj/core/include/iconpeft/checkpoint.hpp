#pragma once

#include <optional>
#include <string>

#include "iconpeft/vit.hpp"

namespace iconpeft {

enum class LoadScope {
  All,           // every parameter must match by name and shape
  BackboneOnly,  // load matching backbone entries, ignore the rest
};

// Manifest (UTF-8 JSON: names, shapes, dtype, byte offsets, trainable flags,
// recipe, config hash) plus a sibling raw little-endian blob in manifest
// order. save -> load -> save is byte-identical.
template <class S>
void save_checkpoint(const VisionTransformer<S>& model,
                     const std::string& manifest_path,
                     const std::string& blob_path,
                     const std::string& config_hash);

template <class S>
void load_checkpoint(VisionTransformer<S>& model,
                     const std::string& manifest_path,
                     const std::string& blob_path,
                     LoadScope scope = LoadScope::All);

}  // namespace iconpeft

#pragma once

#include <optional>
#include <string>

#include "iconpeft/config.hpp"

namespace iconpeft {

// Exit-code contract shared by every subcommand:
//   0 success, 2 configuration/validation problem, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct CliOptions {
  std::string config_path;
  std::optional<uint64_t> seed;          // overrides train.seed
  std::optional<Precision> precision;    // overrides config precision
  std::optional<std::string> out_dir;    // overrides output_dir
  std::string checkpoint;                // rollout: manifest path
  std::string image;                     // rollout: input PGM/PPM
};

// Trains per config; writes metrics.csv, checkpoint.json/.bin and params.json
// into the output directory.
int run_train(const CliOptions& opts);

// Prints a trainable-parameter table for the configured model: the configured
// recipe, every built-in recipe, and an icon kernel-size sweep.
int run_count_params(const CliOptions& opts);

// Finite-difference check of every trainable parameter group. Enforces a
// small model (embed_dim <= 32, depth <= 2); nonzero exit when any group
// exceeds the per-precision threshold.
int run_grad_check(const CliOptions& opts);

// Writes the attention-rollout map of one image (CSV + min-max normalized
// 8-bit PGM on the token grid).
int run_rollout(const CliOptions& opts);

// "<base>.json" -> "<base>.bin"; used for checkpoint blob paths.
std::string blob_path_for(const std::string& manifest_path);

}  // namespace iconpeft

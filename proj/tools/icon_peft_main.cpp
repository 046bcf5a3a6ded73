#include <CLI11.hpp>

#include "iconpeft/commands.hpp"
#include "iconpeft/threading.hpp"

int main(int argc, char** argv) {
  CLI::App app{"icon_peft: parameter-efficient fine-tuning lab for a compact "
               "ViT with an input-conditioned dynamic adapter"};
  app.require_subcommand(1);

  iconpeft::CliOptions opts;
  std::string precision_flag;
  uint64_t seed_flag = 0;
  std::string out_flag;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "run config (JSON)")
        ->required();
    cmd->add_option("--seed", seed_flag, "override train.seed")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--precision", precision_flag, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--out", out_flag, "override output directory");
  };

  CLI::App* train = app.add_subcommand("train", "train per config and write artifacts");
  add_common(train);
  CLI::App* count = app.add_subcommand("count-params", "trainable-parameter table");
  add_common(count);
  CLI::App* gradcheck = app.add_subcommand(
      "grad-check", "finite-difference check of every trainable group");
  add_common(gradcheck);
  CLI::App* rollout =
      app.add_subcommand("rollout", "export attention-rollout map of one image");
  add_common(rollout);
  rollout->add_option("--checkpoint", opts.checkpoint, "checkpoint manifest (.json)")
      ->required();
  rollout->add_option("--image", opts.image, "input image (binary PGM/PPM)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : iconpeft::kExitConfig;
  }

  for (CLI::App* cmd : {train, count, gradcheck, rollout}) {
    if (!cmd->parsed()) continue;
    if (cmd->count("--seed")) opts.seed = seed_flag;
    if (cmd->count("--precision")) {
      opts.precision = iconpeft::precision_from_string(precision_flag);
    }
    if (cmd->count("--out")) opts.out_dir = out_flag;
  }

  if (train->parsed()) return iconpeft::run_train(opts);
  if (count->parsed()) return iconpeft::run_count_params(opts);
  if (gradcheck->parsed()) return iconpeft::run_grad_check(opts);
  if (rollout->parsed()) return iconpeft::run_rollout(opts);
  return iconpeft::kExitConfig;
}

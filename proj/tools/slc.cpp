#include "commands.hpp"

#include "slc/config.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

slc::MergeMode parse_merge(const std::string& s) {
  return s == "last_write" ? slc::MergeMode::LastWrite : slc::MergeMode::Mean;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace slc::cli;
  CLI::App app{"Semantic segmentation with supervised long-range correlation"};
  app.require_subcommand(1);

  TrainArgs ta;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", ta.config, "key = value config file")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Overrides the config seed");
  train_cmd->add_option("--out", ta.out, "Output directory (overrides out_dir)");
  train_cmd->add_flag("--fp64", ta.fp64, "Train in 64-bit");

  PredictArgs pa;
  std::string predict_merge = "mean";
  auto* predict_cmd = app.add_subcommand("predict", "Predict label maps with overlapping tiles");
  predict_cmd->add_option("--checkpoint", pa.checkpoint)->required();
  predict_cmd->add_option("--image", pa.image, "Image file or directory")->required();
  predict_cmd->add_option("--out", pa.out, "Label PNG, or directory for directory input")->required();
  predict_cmd->add_option("--overlay", pa.overlay, "Color overlay PNG (or directory)");
  predict_cmd->add_option("--palette", pa.palette, "palette.txt with `id r g b` lines");
  predict_cmd->add_option("--tile", pa.tile, "Tile size (default: training tile size)");
  predict_cmd->add_option("--overlap", pa.overlap, "Tile overlap fraction")->check(CLI::Range(0.0, 0.99));
  predict_cmd->add_option("--merge", predict_merge)->check(CLI::IsMember({"mean", "last_write"}));
  predict_cmd->add_flag("--fp64", pa.fp64, "Run in 64-bit");

  EvalArgs ea;
  std::string ignore_list;
  auto* eval_cmd = app.add_subcommand("eval", "Score predicted label maps against ground truth");
  eval_cmd->add_option("--pred", ea.pred_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--gt", ea.gt_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", ea.out, "Directory for metrics.txt");
  eval_cmd->add_option("--ignore", ignore_list, "Ground-truth ids left out, e.g. 5 or 0,5");
  eval_cmd->add_option("--n-classes", ea.n_classes, "Class count (default: inferred)");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out", sa.out)->required();
  synth_cmd->add_option("--seed", sa.seed);
  synth_cmd->add_option("--kind", sa.kind)->check(CLI::IsMember({"shapes", "longrange"}));
  synth_cmd->add_option("--n-images", sa.n_images)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--size", sa.size)->check(CLI::Range(8, 8192));
  synth_cmd->add_option("--classes", sa.n_classes)->check(CLI::Range(2, 254));
  synth_cmd->add_option("--noise", sa.noise);

  TilesArgs tla;
  auto* tiles_cmd = app.add_subcommand("tiles", "Cut a dataset into training and validation tiles");
  tiles_cmd->add_option("--data", tla.data)->required()->check(CLI::ExistingDirectory);
  tiles_cmd->add_option("--out", tla.out)->required();
  tiles_cmd->add_option("--size", tla.size)->check(CLI::PositiveNumber);
  tiles_cmd->add_option("--holdout", tla.holdout)->check(CLI::Range(0.0, 1.0));
  tiles_cmd->add_option("--seed", tla.seed);

  GradcheckArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  grad_cmd->add_option("--seed", ga.seed);
  grad_cmd->add_option("--instances", ga.instances)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsageError;
  }

  if (*train_cmd) {
    if (*seed_opt) ta.seed = train_seed;
    return train(ta, std::cout, std::cerr);
  }
  if (*predict_cmd) {
    pa.merge = parse_merge(predict_merge);
    return predict(pa, std::cout, std::cerr);
  }
  if (*eval_cmd) {
    try {
      if (!ignore_list.empty()) ea.ignore = slc::parse_int_list(ignore_list);
    } catch (const std::exception& e) {
      std::cerr << "bad --ignore list: " << e.what() << '\n';
      return kUsageError;
    }
    return eval(ea, std::cout, std::cerr);
  }
  if (*synth_cmd) return synth(sa, std::cout, std::cerr);
  if (*tiles_cmd) return tiles(tla, std::cout, std::cerr);
  return gradcheck(ga, std::cout, std::cerr);
}

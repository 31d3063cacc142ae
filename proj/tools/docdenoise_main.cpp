#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "docdenoise/commands.hpp"

using namespace docdenoise;

int main(int argc, char** argv) {
  CLI::App app{"Binary document denoising with conditional GANs"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Master seed")->type_name("UINT");
  app.add_option("--config", global.config, "Flat JSON run configuration")->check(CLI::ExistingFile);

  DatasetArgs dataset;
  auto* ds = app.add_subcommand("dataset", "Build a paired clean/noisy dataset from clean pages");
  ds->add_option("clean_dir", dataset.clean_dir, "Directory of clean page images")->required();
  ds->add_option("out_dir", dataset.out_dir, "Output directory")->required();
  ds->add_option("--variants", dataset.variants, "Noisy variants per clean page")->capture_default_str();
  ds->add_option("--splits", dataset.split_fractions, "train val test fractions")->expected(3);

  TrainArgs train_args;
  std::string regime;
  auto* tr = app.add_subcommand("train", "Train a generator/discriminator pair");
  tr->add_option("--manifest", train_args.manifest, "Dataset manifest.csv");
  tr->add_option("--output", train_args.output_dir, "Run directory");
  tr->add_option("--regime", regime, "classical or hybrid")->check(CLI::IsMember({"classical", "hybrid"}));
  tr->add_option("--epochs", train_args.epochs, "Override the epoch count");
  tr->add_option("--resume", train_args.resume_from, "Checkpoint to resume from")->check(CLI::ExistingFile);

  DenoiseArgs denoise;
  auto* dn = app.add_subcommand("denoise", "Denoise a page or a directory of pages");
  dn->add_option("checkpoint", denoise.checkpoint, "Trained checkpoint")->required();
  dn->add_option("input", denoise.input, "Image file or directory")->required();
  dn->add_option("out_dir", denoise.out_dir, "Output directory")->required();

  EvalArgs eval;
  std::string split = "test";
  auto* ev = app.add_subcommand("eval", "Score denoised pages against the clean references");
  ev->add_option("manifest", eval.manifest, "Dataset manifest.csv")->required();
  ev->add_option("denoised_dir", eval.denoised_dir, "Directory written by `denoise`")->required();
  ev->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  ev->add_option("--report", eval.report, "Also write the JSON lines here");

  PlotArgs plot;
  auto* pl = app.add_subcommand("plot", "Render training curves from metrics.jsonl");
  pl->add_option("metrics", plot.metrics, "metrics.jsonl from a run")->required();
  pl->add_option("out_dir", plot.out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (*ds) return cmd_dataset(global, dataset, std::cout, std::cerr);
  if (*tr) {
    if (!regime.empty()) train_args.regime = parse_regime(regime);
    return cmd_train(global, train_args, std::cout, std::cerr);
  }
  if (*dn) return cmd_denoise(global, denoise, std::cout, std::cerr);
  if (*ev) {
    eval.split = *parse_split(split);
    return cmd_eval(global, eval, std::cout, std::cerr);
  }
  return cmd_plot(global, plot, std::cout, std::cerr);
}

// Command-line front end: train, eval, fuse, diagnose.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "stbp/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Spiking ResNets trained with spatio-temporal backprop and "
               "threshold-dependent batch norm"};
  app.require_subcommand(1);

  std::string config;
  std::string checkpoint;
  std::string dataset;
  std::string in_path;
  std::string out_path;
  std::string kind;

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("config", config, "Run config")->required();

  auto* eval = app.add_subcommand("eval", "Report accuracy and firing rates");
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("dataset", dataset,
                   "Manifest path, toy kind, or toy:<kind>:<n>:<seed>")
      ->required();

  auto* fuse = app.add_subcommand("fuse", "Fold tdBN into conv weights");
  fuse->add_option("in", in_path, "Unfused checkpoint")->required();
  fuse->add_option("out", out_path, "Fused checkpoint to write")->required();

  auto* diagnose = app.add_subcommand("diagnose", "Run a diagnostic check");
  std::string kinds;
  for (const auto& k : stbp::diagnostic_kinds()) {
    kinds += (kinds.empty() ? "" : "|") + k;
  }
  diagnose->add_option("kind", kind, kinds)->required();
  diagnose->add_option("config", config, "Run config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : stbp::kExitUsage;
  }

  if (*train) return stbp::cmd_train(config, std::cout, std::cerr);
  if (*eval) return stbp::cmd_eval(checkpoint, dataset, std::cout, std::cerr);
  if (*fuse) return stbp::cmd_fuse(in_path, out_path, std::cout, std::cerr);
  return stbp::cmd_diagnose(kind, config, std::cout, std::cerr);
}

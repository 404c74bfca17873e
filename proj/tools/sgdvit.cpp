#include <iostream>

#include <CLI11.hpp>

#include "sgdvit/app/commands.hpp"

using namespace sgdvit;

int main(int argc, char** argv) {
  CLI::App app{"sgdvit: saliency-guided dynamic vision transformer tracker"};
  app.require_subcommand(1);

  std::string config_path, seq_dir, out_dir, results, gt, spec_path;
  std::vector<double> densities{0, 0.25, 0.5, 0.75, 1};
  bool saliency = false;

  auto* train = app.add_subcommand("train-toy", "overfit a model on one sequence, write checkpoint + loss.csv");
  train->add_option("--config", config_path, "run config")->required();

  auto* track = app.add_subcommand("track", "track a sequence, write results.txt + confidence.csv");
  track->add_option("--config", config_path, "run config")->required();
  track->add_option("--seq", seq_dir, "sequence directory (default: paths.sequence)");
  track->add_option("--out", out_dir, "output directory (default: paths.output)");
  track->add_flag("--saliency", saliency, "also write saliency maps as PGM");

  auto* ev = app.add_subcommand("eval", "metrics of a results file against ground truth");
  ev->add_option("--results", results, "predicted boxes")->required();
  ev->add_option("--gt", gt, "ground-truth boxes")->required();
  ev->add_option("--out", out_dir, "write frames.csv, summary.csv and plots here");

  auto* bench = app.add_subcommand("bench-tokens", "token counts and MACs at forced mask densities");
  bench->add_option("--config", config_path, "run config")->required();
  bench->add_option("--densities", densities, "comma-separated densities in [0, 1]")->delimiter(',');

  auto* synth = app.add_subcommand("synth", "generate a synthetic sequence directory");
  synth->add_option("--spec", spec_path, "synth spec (bare synth keys)");
  synth->add_option("--out", out_dir, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "train and evaluate all four variants");
  ablate->add_option("--config", config_path, "run config")->required();
  ablate->add_option("--out", out_dir, "output directory (default: paths.output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : app::kConfigError;
  }

  try {
    if (*train) {
      app::cmd_train_toy(app::load_run_config(config_path), std::cout);
    } else if (*track) {
      const auto cfg = app::load_run_config(config_path);
      app::cmd_track(cfg, seq_dir.empty() ? cfg.sequence : seq_dir, out_dir.empty() ? cfg.output : out_dir, saliency);
    } else if (*ev) {
      app::cmd_eval(results, gt, out_dir, std::cout);
    } else if (*bench) {
      app::cmd_bench_tokens(app::load_run_config(config_path), densities, std::cout);
    } else if (*synth) {
      app::cmd_synth(spec_path, out_dir);
    } else if (*ablate) {
      const auto cfg = app::load_run_config(config_path);
      app::cmd_ablate(cfg, out_dir.empty() ? cfg.output : out_dir, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return app::exit_code_for(e);
  }
  return app::kOk;
}

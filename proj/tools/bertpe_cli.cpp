// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// bertpe: parameter counting, experiment runs, gradient checks and plot data.
//
//   bertpe count --config manifests/layers.ini
//   bertpe run --manifest manifests/desk.ini --out out/desk
//   bertpe gradcheck --seed 0 --seeds 10
//   bertpe plotdata out/desk/report.csv --out out/plots
//   bertpe generate-data --count 100 --out data.tsv

#include <bertpe/commands.hpp>

#include <CLI11.hpp>

#include <exception>
#include <iostream>

int main(int argc, char** argv) {
  using namespace bertpe;
  CLI::App app{"Layer-freezing, adapter and CACNN experiments on a from-scratch encoder"};
  app.require_subcommand(1);

  std::string manifest;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool parallel = false;

  auto* count_cmd = app.add_subcommand("count", "Trainable-parameter table for a manifest");
  count_cmd->add_option("--config,--manifest", manifest, "Manifest file")->required();
  count_cmd->add_option("--out", out_dir, "Directory for count.csv");

  auto* run_cmd = app.add_subcommand("run", "Train and evaluate every experiment in a manifest");
  run_cmd->add_option("--manifest,--config", manifest, "Manifest file")->required();
  run_cmd->add_option("--out", out_dir, "Directory for report.csv and loss CSVs");
  auto* run_seed = run_cmd->add_option("--seed", seed, "Override every experiment's seed");
  run_cmd->add_flag("--parallel", parallel,
                    "Run experiments concurrently (timings are then not comparable)");

  std::size_t seeds = 10;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op");
  grad_cmd->add_option("--seed", seed, "First seed");
  grad_cmd->add_option("--seeds", seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);

  std::vector<std::string> reports;
  auto* plot_cmd = app.add_subcommand("plotdata", "Project run reports onto plot tables");
  plot_cmd->add_option("reports", reports, "report.csv files")->required();
  plot_cmd->add_option("--out", out_dir, "Directory for the three plot CSVs");

  DatasetParams data;
  std::string data_path = "data.tsv";
  auto* gen_cmd = app.add_subcommand("generate-data", "Write a synthetic span dataset");
  gen_cmd->add_option("--seed", data.seed, "Generator seed");
  gen_cmd->add_option("--count", data.count, "Number of examples");
  gen_cmd->add_option("--len", data.seq_len, "Sequence length");
  gen_cmd->add_option("--vocab", data.vocab, "Vocabulary size");
  gen_cmd->add_option("--needle-min", data.needle_min, "Shortest query");
  gen_cmd->add_option("--needle-max", data.needle_max, "Longest query");
  gen_cmd->add_option("--unanswerable", data.unanswerable_fraction, "Unanswerable fraction");
  gen_cmd->add_option("--out", data_path, "Output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (count_cmd->parsed()) {
      cmd_count(load_manifest(manifest), out_dir, std::cout);
    } else if (run_cmd->parsed()) {
      RunOptions options;
      options.out_dir = out_dir;
      options.parallel = parallel;
      if (run_seed->count() > 0) options.seed = seed;
      cmd_run(load_manifest(manifest), options, std::cout);
    } else if (grad_cmd->parsed()) {
      if (!cmd_gradcheck(standard_gradcheck_suite(), seed, seeds, std::cout).all_passed)
        return kExitRuntime;
    } else if (plot_cmd->parsed()) {
      std::vector<std::filesystem::path> paths(reports.begin(), reports.end());
      cmd_plotdata(paths, out_dir, std::cout);
    } else if (gen_cmd->parsed()) {
      cmd_generate_data(data, data_path, std::cout);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

// carmfl: multimodal federated learning simulator.
//
//   carmfl run <config> [--out DIR] [--seeds 0,1,2]
//   carmfl sweep <config> --axis alpha|public_size|partition [--out DIR] [--seeds ...]
//   carmfl gen-data <config> [--out DIR] [--seeds ...]

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "carmfl/errors.hpp"
#include "carmfl/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multimodal federated learning with missing modalities"};
  app.require_subcommand(1);

  std::string out_dir;
  std::string seeds;
  app.add_option("--out", out_dir, "Output directory (overrides out_dir)");
  app.add_option("--seeds", seeds, "Comma-separated seeds (overrides seeds)");

  std::string config_path;
  std::string axis;
  auto* run = app.add_subcommand("run", "Run one experiment per seed");
  run->add_option("config", config_path, "Config file")->required();
  auto* sweep = app.add_subcommand("sweep", "Sweep one axis of the config");
  sweep->add_option("config", config_path, "Config file")->required();
  sweep->add_option("--axis", axis, "alpha, public_size or partition")->required();
  auto* gen = app.add_subcommand("gen-data", "Write the synthetic client, public, val and test sets as JSONL");
  gen->add_option("config", config_path, "Config file")->required();
  for (auto* sub : {run, sweep, gen}) {
    sub->add_option("--out", out_dir, "Output directory (overrides out_dir)");
    sub->add_option("--seeds", seeds, "Comma-separated seeds (overrides seeds)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  carmfl::RunOverrides overrides;
  try {
    if (!out_dir.empty()) overrides.out_dir = out_dir;
    if (!seeds.empty()) overrides.seeds = carmfl::parse_seed_list(seeds);
    if (run->parsed()) return carmfl::run_command(config_path, overrides, std::cerr);
    if (sweep->parsed()) {
      return carmfl::sweep_command(config_path, carmfl::parse_sweep_axis(axis), overrides, std::cerr);
    }
    if (gen->parsed()) return carmfl::gen_data_command(config_path, overrides, std::cerr);
  } catch (const carmfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

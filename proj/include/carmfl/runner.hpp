// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carmfl/config.hpp"
#include "carmfl/federation.hpp"

namespace carmfl {

enum class SweepAxis { Alpha, PublicSize, Partition };

SweepAxis parse_sweep_axis(std::string_view s);
std::string_view to_string(SweepAxis a);

/// Command-line values that take precedence over the config file.
struct RunOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
};

std::vector<std::uint64_t> parse_seed_list(std::string_view s);

/// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
int run_command(const std::string& config_path, const RunOverrides& overrides, std::ostream& log);
int sweep_command(const std::string& config_path, SweepAxis axis, const RunOverrides& overrides, std::ostream& log);
int gen_data_command(const std::string& config_path, const RunOverrides& overrides, std::ostream& log);

struct SeedOutcome {
  std::uint64_t seed = 0;
  ExperimentResult result;
};

/// Per-round history with a leading "# config_hash=... seed=..." row.
std::string history_csv(const ExperimentConfig& cfg, std::uint64_t seed, const std::vector<RoundReport>& history);

/// Best-checkpoint metrics per seed, their mean and range. Wall-clock values
/// live only under "wall_seconds" keys.
nlohmann::json summary_json(const ExperimentConfig& cfg, const std::vector<SeedOutcome>& outcomes);

/// Mean test AUC over the rare classes (prior < 0.02), nullopt when none is defined.
std::optional<double> rare_class_auc(const ExperimentConfig& cfg, const RoundReport& report);

/// Applies one sweep value to a copy of `base`.
ExperimentConfig with_axis_value(const ExperimentConfig& base, SweepAxis axis, std::size_t index);
std::size_t axis_length(const ExperimentConfig& cfg, SweepAxis axis);
std::string axis_value_label(const ExperimentConfig& cfg, SweepAxis axis, std::size_t index);

/// Runs every value of `axis` for every seed and returns the sweep CSV.
/// Per-run histories go under `out_dir` when it is non-empty.
std::string run_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::string& out_dir, std::ostream& log);

}  // namespace carmfl

// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "carmfl/data.hpp"

namespace carmfl {

enum class RunMode { CarMfl, MFedAvg, MFedAvgP, CentralUpper, PublicOnlyLower, MFedAvgPNoMissing };

enum class WeightNorm { Softmax, Linear };

std::string_view to_string(RunMode m);
RunMode parse_run_mode(std::string_view s);
std::string_view to_string(WeightNorm n);
WeightNorm parse_weight_norm(std::string_view s);

struct ClientSplit {
  std::size_t image_only = 0;
  std::size_t text_only = 0;
  std::size_t multimodal = 10;

  std::size_t total() const { return image_only + text_only + multimodal; }
  bool operator==(const ClientSplit&) const = default;
};

/// Parses "I:T:M".
ClientSplit parse_client_split(std::string_view s);
std::string to_string(const ClientSplit& split);

/// Everything that defines one experiment, including the synthetic world.
struct ExperimentConfig {
  RunMode mode = RunMode::CarMfl;
  ClientSplit partition{8, 0, 2};
  bool heterogeneous = false;

  // synthetic data
  std::size_t num_labels = 14;
  std::size_t img_dim = 32;
  std::size_t txt_dim = 32;
  double img_signal = 1.0;
  double txt_signal = 1.0;
  double img_noise = 0.4;
  double txt_noise = 0.4;
  double feature_shift = 0.5;
  double prior_scale = 1.5;
  std::size_t samples_per_client = 220;
  std::size_t public_size = 270;
  std::size_t val_size = 400;
  std::size_t test_size = 800;

  // model
  std::size_t hidden_dim = 64;
  std::size_t feature_dim = 32;

  // protocol
  std::size_t rounds = 30;
  std::size_t local_epochs = 3;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  std::size_t top_k = 10;
  double alpha = 0.3;
  WeightNorm weight_norm = WeightNorm::Softmax;
  bool freeze_global = false;

  // execution and output
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out_dir = "out";
  std::size_t threads = 1;
  bool checkpoints = false;
  bool dump_augmentation = false;

  // sweep axes
  std::vector<double> sweep_alpha{1.0, 0.5, 0.4, 0.3, 0.2, 0.0};
  std::vector<std::size_t> sweep_public_size{60, 121, 189, 270};
  std::vector<ClientSplit> sweep_partition;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  PartitionConfig partition_config() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// `key = value` lines; `#` starts a comment; lists are comma separated.
/// Unknown keys and malformed values raise ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Canonical normal form: every key, fixed order, shortest round-trip numbers.
std::string serialize_config(const ExperimentConfig& cfg);

/// FNV-1a over the normal form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace carmfl

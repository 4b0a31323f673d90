// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carmfl/sample.hpp"
#include "carmfl/tensor.hpp"

namespace carmfl {

enum class Regime { ImageOnly, TextOnly, Multimodal };

std::string_view to_string(Regime r);
Regime parse_regime(std::string_view s);

struct Dataset {
  Regime regime = Regime::Multimodal;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Throws InvariantError if any sample breaks the regime, has no modality,
  /// or has a label vector of the wrong length.
  void validate(std::size_t num_labels) const;

  bool operator==(const Dataset&) const = default;
};

/// Label-conditioned Gaussian generator. A sample with label set L has
///   img = img_offset + sum_{l in L} img_signal[l] + N(0, img_noise^2 I)
/// and the analogous text features, so both modalities carry the labels.
struct GeneratorSpec {
  std::size_t num_labels = 14;
  std::size_t img_dim = 32;
  std::size_t txt_dim = 32;
  std::vector<double> priors;
  std::vector<Vector> img_signal;
  std::vector<Vector> txt_signal;
  double img_noise = 1.0;
  double txt_noise = 1.0;
  Vector img_offset;
  Vector txt_offset;

  void validate() const;

  /// Closed-form E[img] and E[txt].
  Vector expected_img_mean() const;
  Vector expected_txt_mean() const;
};

/// Label priors used by default: a descending common-to-uncommon profile over
/// 14 labels whose last two entries are the rare classes at 0.015.
std::vector<double> default_priors(std::size_t num_labels);
std::vector<std::size_t> rare_label_indices(const std::vector<double>& priors);

struct SignalConfig {
  double img_signal_norm = 1.0;
  double txt_signal_norm = 1.0;
  double img_noise = 1.0;
  double txt_noise = 1.0;
};

/// Draws random signal directions with the requested norms.
GeneratorSpec make_generator(std::size_t num_labels, std::size_t img_dim, std::size_t txt_dim,
                             std::vector<double> priors, const SignalConfig& signal,
                             std::uint64_t seed);

struct ShiftConfig {
  double feature_shift = 0.0;  // norm of the mean offset added to each modality
  double prior_scale = 1.0;    // multiplies each prior, clamped into (0, 1)
};

/// Distribution-shifted copy of `base` for heterogeneous client populations.
GeneratorSpec shifted(const GeneratorSpec& base, const ShiftConfig& shift, std::uint64_t seed);

/// n multimodal samples with ids first_id, first_id+1, ...
Dataset generate(const GeneratorSpec& spec, std::size_t n, std::uint64_t seed, SampleId first_id = 0);

/// Removes the modality the regime lacks; ids and labels are untouched.
Dataset strip_to(Dataset ds, Regime regime);

struct PartitionConfig {
  std::size_t image_only = 0;
  std::size_t text_only = 0;
  std::size_t multimodal = 1;
  std::size_t samples_per_client = 0;  // 0 = split the remainder evenly
  std::size_t public_size = 0;
  std::size_t val_size = 0;
  std::size_t test_size = 0;
  bool heterogeneous = false;
  bool strip_modalities = true;

  std::size_t num_clients() const { return image_only + text_only + multimodal; }
  void validate() const;
};

struct Partition {
  std::vector<Dataset> clients;
  Dataset public_pool;
  Dataset validation;
  Dataset test;
};

/// Splits `base` into test, validation, client and public sets, in that
/// order. In heterogeneous mode the first I+T clients draw from `shifted`
/// instead of `base`.
Partition partition(const Dataset& base, const PartitionConfig& cfg, const Dataset* shifted = nullptr);

/// Samples needed from the base and shifted generators for `cfg`.
std::size_t base_samples_needed(const PartitionConfig& cfg);
std::size_t shifted_samples_needed(const PartitionConfig& cfg);

/// JSONL with a leading header object
///   {"header": {"num_labels": L, "img_dim": a, "txt_dim": b, "regime": "..."}}
/// followed by one {"id", "img", "txt", "labels"} object per line.
void save_jsonl(const std::string& path, const Dataset& ds);
Dataset load_jsonl(const std::string& path);
std::string to_jsonl(const Dataset& ds);
Dataset parse_jsonl(std::string_view text);

}  // namespace carmfl

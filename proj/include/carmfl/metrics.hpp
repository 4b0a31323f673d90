// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carmfl/data.hpp"
#include "carmfl/nn.hpp"

namespace carmfl {

/// Mann-Whitney AUC: probability that a random positive outscores a random
/// negative, ties counted one half. nullopt unless both classes occur.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Column-major view: scores[c][i] is the score of sample i for class c.
struct ScoreTable {
  std::vector<Vector> scores;
  std::vector<std::vector<std::uint8_t>> labels;

  std::size_t num_classes() const { return scores.size(); }
};

std::vector<std::optional<double>> per_class_auc(const ScoreTable& table);

/// Unweighted mean over classes with a defined AUC. Throws EvaluationError
/// when no class is defined.
double macro_auc(const ScoreTable& table);
double macro_auc(std::span<const std::optional<double>> per_class);

/// Runs the model over every sample of `ds`; absent modalities are zero-filled.
ScoreTable score_dataset(const Model& model, const Dataset& ds);

struct ModalityShare {
  double img = 0.0;
  double txt = 0.0;
};

/// Share of absolute classifier weight mass on the image and text columns.
/// nullopt for an all-zero weight matrix.
std::optional<ModalityShare> modality_bias(const ClassifierParams& classifier);

/// Printed beside every report.
inline constexpr const char* kAucSkipRule =
    "classes whose split lacks positives or negatives are excluded from the macro average";

}  // namespace carmfl

// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "carmfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "carmfl/errors.hpp"

namespace carmfl {

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank-sum with average ranks over tie groups.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

std::vector<std::optional<double>> per_class_auc(const ScoreTable& table) {
  if (table.labels.size() != table.scores.size()) throw ShapeError("per_class_auc: class count mismatch");
  std::vector<std::optional<double>> out;
  out.reserve(table.num_classes());
  for (std::size_t c = 0; c < table.num_classes(); ++c) {
    out.push_back(roc_auc(table.scores[c], table.labels[c]));
  }
  return out;
}

double macro_auc(std::span<const std::optional<double>> per_class) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& a : per_class) {
    if (!a) continue;
    sum += *a;
    ++defined;
  }
  if (defined == 0) throw EvaluationError("macro_auc: no class has both positives and negatives");
  return sum / static_cast<double>(defined);
}

double macro_auc(const ScoreTable& table) {
  const auto per_class = per_class_auc(table);
  return macro_auc(per_class);
}

ScoreTable score_dataset(const Model& model, const Dataset& ds) {
  const std::size_t classes = model.classifier.num_labels();
  ScoreTable t;
  t.scores.assign(classes, Vector(ds.size()));
  t.labels.assign(classes, std::vector<std::uint8_t>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Sample& s = ds.samples[i];
    const Vector logits = forward(model, s.img, s.txt);
    for (std::size_t c = 0; c < classes; ++c) {
      t.scores[c][i] = logits[c];
      t.labels[c][i] = s.labels.at(c);
    }
  }
  return t;
}

std::optional<ModalityShare> modality_bias(const ClassifierParams& classifier) {
  const std::size_t d = classifier.feature_dim();
  double img = 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < classifier.weight.rows(); ++r) {
    auto row = classifier.weight.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double a = std::abs(row[c]);
      total += a;
      if (c < d) img += a;
    }
  }
  if (total == 0.0) return std::nullopt;
  ModalityShare share;
  share.img = img / total;
  share.txt = 1.0 - share.img;
  return share;
}

}  // namespace carmfl

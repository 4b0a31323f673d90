// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference computations used by the unit and acceptance tests.
// Nothing here calls the code path it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "carmfl/nn.hpp"
#include "carmfl/retrieval.hpp"

namespace carmfl::oracle {

/// Central finite differences of the mean batch loss, one coordinate at a time.
inline Vector finite_difference_gradient(const Model& model, std::span<const Sample* const> batch,
                                         double step = 1e-5) {
  Vector flat = model.flatten();
  Vector grad(flat.size());
  Model probe = model;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double orig = flat[i];
    flat[i] = orig + step;
    probe.unflatten(flat);
    const double up = batch_loss(probe, batch);
    flat[i] = orig - step;
    probe.unflatten(flat);
    const double down = batch_loss(probe, batch);
    flat[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// max_i |a_i - b_i| / max(1, |a_i|, |b_i|) style relative error with an
/// absolute floor so entries near zero do not dominate.
inline double max_relative_error(const Vector& a, const Vector& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

/// Logits by explicit loops over the raw parameters.
inline Vector manual_forward(const Model& m, const std::optional<Vector>& img, const std::optional<Vector>& txt) {
  auto run = [](const EncoderParams& enc, const Vector& x) {
    Vector h = x;
    for (const auto& layer : enc.layers) {
      Vector z(layer.weight.rows(), 0.0);
      for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
        double s = layer.bias[r];
        for (std::size_t c = 0; c < layer.weight.cols(); ++c) s += layer.weight(r, c) * h[c];
        z[r] = (layer.activation == Activation::Relu) ? std::max(0.0, s) : s;
      }
      h = z;
    }
    double n = 0.0;
    for (double v : h) n += v * v;
    n = std::sqrt(n);
    if (n > 0.0) {
      for (double& v : h) v /= n;
    }
    return h;
  };
  const std::size_t d = m.classifier.weight.cols() / 2;
  Vector fused(2 * d, 0.0);
  if (img) {
    Vector f = run(m.image, *img);
    std::copy(f.begin(), f.end(), fused.begin());
  }
  if (txt) {
    Vector f = run(m.text, *txt);
    std::copy(f.begin(), f.end(), fused.begin() + static_cast<std::ptrdiff_t>(d));
  }
  Vector logits(m.classifier.weight.rows());
  for (std::size_t r = 0; r < logits.size(); ++r) {
    double s = m.classifier.bias[r];
    for (std::size_t c = 0; c < fused.size(); ++c) s += m.classifier.weight(r, c) * fused[c];
    logits[r] = s;
  }
  return logits;
}

/// Full sort by (distance, id) over every pool row, truncated to k.
inline std::vector<std::pair<SampleId, double>> brute_force_topk(const Matrix& pool, const std::vector<SampleId>& ids,
                                                                 const Vector& query, std::size_t k) {
  std::vector<std::pair<SampleId, double>> all;
  for (std::size_t r = 0; r < pool.rows(); ++r) {
    double d = 0.0;
    for (std::size_t c = 0; c < pool.cols(); ++c) {
      const double diff = query[c] - pool(r, c);
      d += diff * diff;
    }
    all.emplace_back(ids[r], d);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  all.resize(k);
  return all;
}

/// Jaccard via explicit label sets.
inline double set_jaccard(const MultiHot& a, const MultiHot& b) {
  std::vector<std::size_t> sa, sb, inter, uni;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) sa.push_back(i);
    if (b[i]) sb.push_back(i);
  }
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
  std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(uni));
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

/// Index into `candidate_labels` of the first maximal Jaccard score.
inline std::size_t exhaustive_refine(const std::vector<MultiHot>& candidate_labels, const MultiHot& query) {
  std::vector<double> scores;
  for (const auto& c : candidate_labels) scores.push_back(set_jaccard(query, c));
  const double best = *std::max_element(scores.begin(), scores.end());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == best) return i;
  }
  return 0;
}

/// O(n^2) count of positive-negative pairs with ties worth one half.
inline double pair_count_auc(const Vector& scores, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

/// Weighted mean of one parameter range across flat vectors.
inline Vector weighted_mean(const std::vector<Vector>& flats, const Vector& weights, std::size_t offset,
                            std::size_t size) {
  Vector out(size, 0.0);
  for (std::size_t i = 0; i < size; ++i) {
    long double s = 0.0L;
    for (std::size_t k = 0; k < flats.size(); ++k) s += static_cast<long double>(weights[k]) * flats[k][offset + i];
    out[i] = static_cast<double>(s);
  }
  return out;
}

}  // namespace carmfl::oracle

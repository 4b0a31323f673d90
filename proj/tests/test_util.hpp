// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <vector>

#include "carmfl/federation.hpp"
#include "carmfl/nn.hpp"

namespace carmfl::testing {

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (double& x : v) x = g(rng);
  return v;
}

inline MultiHot random_labels(std::size_t n, std::mt19937_64& rng, double p = 0.4) {
  std::bernoulli_distribution b(p);
  MultiHot y(n);
  for (auto& v : y) v = b(rng) ? 1 : 0;
  return y;
}

/// Model with every parameter (biases included) drawn from N(0, scale^2).
/// The zero-bias initializer can park an encoder exactly on the
/// normalization singularity, where no gradient exists.
inline Model random_model(const ModelShape& shape, std::mt19937_64& rng, double scale = 0.7) {
  Model m = make_model(shape, rng);
  m.unflatten(random_vector(m.parameter_count(), rng, scale));
  return m;
}

enum class Presence { Both, ImageOnly, TextOnly };

inline Sample random_sample(const ModelShape& shape, std::mt19937_64& rng, Presence presence, SampleId id = 0) {
  Sample s;
  s.id = id;
  if (presence != Presence::TextOnly) s.img = random_vector(shape.img_dim, rng);
  if (presence != Presence::ImageOnly) s.txt = random_vector(shape.txt_dim, rng);
  s.labels = random_labels(shape.num_labels, rng);
  return s;
}

inline std::vector<const Sample*> pointers(const std::vector<Sample>& xs) {
  std::vector<const Sample*> out;
  for (const auto& s : xs) out.push_back(&s);
  return out;
}

/// Small experiment for fast end-to-end tests.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.partition = {2, 0, 1};
  cfg.num_labels = 4;
  cfg.img_dim = 6;
  cfg.txt_dim = 6;
  cfg.hidden_dim = 8;
  cfg.feature_dim = 4;
  cfg.samples_per_client = 30;
  cfg.public_size = 20;
  cfg.val_size = 40;
  cfg.test_size = 40;
  cfg.rounds = 3;
  cfg.local_epochs = 1;
  cfg.batch_size = 8;
  cfg.lr = 1e-3;
  cfg.top_k = 5;
  cfg.seeds = {7};
  return cfg;
}

}  // namespace carmfl::testing

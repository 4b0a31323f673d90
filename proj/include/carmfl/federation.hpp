// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carmfl/config.hpp"
#include "carmfl/data.hpp"
#include "carmfl/metrics.hpp"
#include "carmfl/nn.hpp"
#include "carmfl/retrieval.hpp"

namespace carmfl {

/// One training participant. The virtual public client is an ordinary
/// multimodal participant flagged `is_public`.
struct ClientState {
  int id = 0;
  Regime regime = Regime::Multimodal;
  Dataset data;
  std::optional<Dataset> augmented;
  bool is_public = false;

  /// The augmented dataset when present, otherwise the private one
  /// (absent modalities are zero-filled by the model).
  const Dataset& training_set() const { return augmented ? *augmented : data; }
};

struct TrainOptions {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double lr = 1e-4;
};

/// Copies `global`, then runs `epochs` shuffled mini-batch passes of Adam
/// (fresh optimizer state) over the client's training set.
Model local_train(const ClientState& client, const Model& global, const TrainOptions& options,
                  std::uint64_t stream_seed);

/// One weight vector per model component, each over the participants.
struct AggregationWeights {
  Vector image;
  Vector text;
  Vector classifier;
};

/// Base weights |D_k| / |D|. In CAR-MFL mode the image-encoder entries of
/// text-only clients and the text-encoder entries of image-only clients are
/// scaled by alpha, and each scaled vector is renormalized by `norm`. The
/// classifier vector is always the base vector.
AggregationWeights compute_weights(std::span<const ClientState> participants, RunMode mode, double alpha,
                                   WeightNorm norm);

/// Blockwise weighted mean of the participants' parameters.
Model aggregate(std::span<const Model> locals, const AggregationWeights& weights);

struct RoundReport {
  int round = 0;
  RunMode mode = RunMode::CarMfl;
  double val_auc = 0.0;
  double test_auc = 0.0;
  std::vector<std::optional<double>> per_class_auc;  // on the test split
  double img_share = 0.0;
  double txt_share = 0.0;
  double mean_unique_pairs = 0.0;  // cumulative; 0 when nothing was augmented
  double wall_seconds = 0.0;
};

struct FederationSettings {
  RunMode mode = RunMode::CarMfl;
  TrainOptions train;
  std::size_t top_k = 10;
  double alpha = 0.3;
  WeightNorm weight_norm = WeightNorm::Softmax;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool freeze_global = false;
};

/// Server-side state of a simulation. Participants hand back only Model
/// values; augmentation pairings stay inside the per-client step.
class Federation {
 public:
  Federation(FederationSettings settings, std::vector<ClientState> participants, Dataset public_pool,
             Dataset validation, Dataset test, Model initial);

  /// Metrics of the current global model.
  RoundReport evaluate(int round) const;

  /// Index, augment, train, aggregate, evaluate.
  RoundReport run_round(int round);

  const Model& global_model() const { return global_; }
  const std::vector<ClientState>& participants() const { return participants_; }
  const std::vector<AugmentedPair>& pairing_history() const { return history_; }
  /// Pairs produced by the most recent round, complementary features included.
  const std::vector<AugmentedPair>& last_round_pairs() const { return last_pairs_; }
  const AggregationWeights& last_weights() const { return last_weights_; }

 private:
  FederationSettings settings_;
  std::vector<ClientState> participants_;
  Dataset public_pool_;
  Dataset validation_;
  Dataset test_;
  Model global_;
  std::vector<AugmentedPair> history_;
  std::vector<AugmentedPair> last_pairs_;
  AggregationWeights last_weights_;
};

/// Derives an independent RNG seed for (seed, stream, a, b).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t a = 0, std::uint64_t b = 0);

/// Synthetic world and participant list for one seed of an experiment.
struct ExperimentSetup {
  GeneratorSpec base_spec;
  Partition partition;
  std::vector<ClientState> participants;
  Model initial;
};

ExperimentSetup make_setup(const ExperimentConfig& cfg, std::uint64_t seed);

struct ExperimentResult {
  RoundReport final_report;          // the round with the best validation AUC
  std::vector<RoundReport> history;  // round 0 is the initial model
  Model final_model;
  std::vector<AugmentedPair> pairing_history;
};

/// Called after every round with the new global model and that round's pairs.
using RoundObserver = std::function<void(const RoundReport&, const Model&, std::span<const AugmentedPair>)>;

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                const RoundObserver& observer = {});

}  // namespace carmfl

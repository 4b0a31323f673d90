// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "carmfl/data.hpp"
#include "carmfl/nn.hpp"

namespace carmfl {

/// The public pool encoded by one global model. Rows are aligned across
/// ids, labels, encoded features and the raw features used for pairing.
struct RetrievalIndex {
  int round = 0;
  std::vector<SampleId> ids;
  std::vector<MultiHot> labels;
  Matrix image_features;  // N_p x d, L2-normalized
  Matrix text_features;   // N_p x d, L2-normalized
  std::vector<Vector> raw_images;
  std::vector<Vector> raw_texts;

  std::size_t size() const noexcept { return ids.size(); }
  const Matrix& features(Modality m) const { return m == Modality::Image ? image_features : text_features; }
};

/// Throws InvariantError unless every public sample carries both modalities.
RetrievalIndex build_index(const Model& global_model, const Dataset& public_pool, int round);

struct Neighbor {
  std::size_t row = 0;
  SampleId id = 0;
  double distance = 0.0;  // squared Euclidean
};

/// Ordered by (distance, id) ascending.
using TopKSet = std::vector<Neighbor>;

/// Exact k nearest pool rows to an encoded query within one modality.
TopKSet topk(const RetrievalIndex& index, std::span<const double> query, Modality modality, std::size_t k);

/// |a ∩ b| / |a ∪ b|, with two empty sets scoring 1.
double jaccard(const MultiHot& a, const MultiHot& b);

/// The candidate with the highest label Jaccard score; ties go to the
/// earliest TopKSet entry.
Neighbor refine(const TopKSet& candidates, const MultiHot& query_labels, const RetrievalIndex& index);

struct AugmentedPair {
  int round = 0;
  int client_id = 0;
  SampleId query_id = 0;
  SampleId retrieved_id = 0;
  double distance = 0.0;
  double jaccard = 0.0;
  Vector complementary;  // raw features of the retrieved modality
};

struct Augmentation {
  Dataset dataset;
  std::vector<AugmentedPair> pairs;
};

/// Pairs every sample of a unimodal client with the complementary modality
/// of its refined retrieval. Multimodal clients pass through with no pairs.
/// Throws ProtocolError if the index was built for another round or is empty.
Augmentation augment_client(const Dataset& client, const RetrievalIndex& index, const Model& global_model,
                            std::size_t k, int round, int client_id = 0);

struct PairingStats {
  std::map<SampleId, std::size_t> unique_partners;
  double mean = 0.0;
};

PairingStats pairing_stats(std::span<const AugmentedPair> history);

/// CSV: round,client_id,sample_id,retrieved_public_id,delta,jaccard
void write_augmentation_csv(std::ostream& out, std::span<const AugmentedPair> pairs, bool header = true);

}  // namespace carmfl

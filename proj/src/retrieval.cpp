// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "carmfl/retrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

#include "carmfl/errors.hpp"

namespace carmfl {

RetrievalIndex build_index(const Model& global_model, const Dataset& public_pool, int round) {
  RetrievalIndex index;
  index.round = round;
  const std::size_t n = public_pool.size();
  const std::size_t d = global_model.classifier.feature_dim();
  index.image_features = Matrix(n, d);
  index.text_features = Matrix(n, d);
  index.ids.reserve(n);
  index.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = public_pool.samples[i];
    if (!s.img || !s.txt) {
      throw InvariantError("build_index: public sample " + std::to_string(s.id) + " is not multimodal");
    }
    const Vector fi = encode(global_model.image, *s.img);
    const Vector ft = encode(global_model.text, *s.txt);
    std::copy(fi.begin(), fi.end(), index.image_features.row(i).begin());
    std::copy(ft.begin(), ft.end(), index.text_features.row(i).begin());
    index.ids.push_back(s.id);
    index.labels.push_back(s.labels);
    index.raw_images.push_back(*s.img);
    index.raw_texts.push_back(*s.txt);
  }
  return index;
}

TopKSet topk(const RetrievalIndex& index, std::span<const double> query, Modality modality, std::size_t k) {
  const std::size_t n = index.size();
  if (k < 1 || k > n) {
    throw ConfigError("topk: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  }
  const Matrix& pool = index.features(modality);
  TopKSet all(n);
  for (std::size_t r = 0; r < n; ++r) all[r] = {r, index.ids[r], squared_distance(query, pool.row(r))};
  auto before = [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), before);
  all.resize(k);
  return all;
}

double jaccard(const MultiHot& a, const MultiHot& b) {
  if (a.size() != b.size()) throw ShapeError("jaccard: label vectors differ in length");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Neighbor refine(const TopKSet& candidates, const MultiHot& query_labels, const RetrievalIndex& index) {
  if (candidates.empty()) throw ProtocolError("refine: empty candidate set");
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double score = jaccard(query_labels, index.labels.at(candidates[i].row));
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return candidates[best];
}

Augmentation augment_client(const Dataset& client, const RetrievalIndex& index, const Model& global_model,
                            std::size_t k, int round, int client_id) {
  Augmentation out;
  if (client.regime == Regime::Multimodal) {
    out.dataset = client;
    return out;
  }
  if (index.round != round) {
    throw ProtocolError("augment_client: index built in round " + std::to_string(index.round) +
                        ", current round is " + std::to_string(round));
  }
  if (index.size() == 0) throw ProtocolError("augment_client: public pool is empty");

  const bool has_image = client.regime == Regime::ImageOnly;
  const Modality query_modality = has_image ? Modality::Image : Modality::Text;
  out.dataset.regime = Regime::Multimodal;
  out.dataset.samples.reserve(client.size());
  out.pairs.reserve(client.size());
  for (const Sample& s : client.samples) {
    const auto& raw = has_image ? s.img : s.txt;
    if (!raw) throw InvariantError("augment_client: sample " + std::to_string(s.id) + " lacks its modality");
    const Vector query = encode(has_image ? global_model.image : global_model.text, *raw);
    const TopKSet candidates = topk(index, query, query_modality, k);
    const Neighbor chosen = refine(candidates, s.labels, index);

    AugmentedPair pair;
    pair.round = round;
    pair.client_id = client_id;
    pair.query_id = s.id;
    pair.retrieved_id = chosen.id;
    pair.distance = chosen.distance;
    pair.jaccard = jaccard(s.labels, index.labels[chosen.row]);
    pair.complementary = has_image ? index.raw_texts[chosen.row] : index.raw_images[chosen.row];

    Sample augmented = s;
    if (has_image) {
      augmented.txt = pair.complementary;
    } else {
      augmented.img = pair.complementary;
    }
    out.dataset.samples.push_back(std::move(augmented));
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

PairingStats pairing_stats(std::span<const AugmentedPair> history) {
  std::map<SampleId, std::set<SampleId>> partners;
  for (const auto& p : history) partners[p.query_id].insert(p.retrieved_id);
  PairingStats stats;
  double total = 0.0;
  for (const auto& [id, set] : partners) {
    stats.unique_partners[id] = set.size();
    total += static_cast<double>(set.size());
  }
  if (!partners.empty()) stats.mean = total / static_cast<double>(partners.size());
  return stats;
}

void write_augmentation_csv(std::ostream& out, std::span<const AugmentedPair> pairs, bool header) {
  if (header) out << "round,client_id,sample_id,retrieved_public_id,delta,jaccard\n";
  char buf[64];
  for (const auto& p : pairs) {
    out << p.round << ',' << p.client_id << ',' << p.query_id << ',' << p.retrieved_id << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", p.distance, p.jaccard);
    out << buf << '\n';
  }
}

}  // namespace carmfl

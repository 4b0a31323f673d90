// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "carmfl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "carmfl/errors.hpp"

namespace carmfl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// thrown by any task is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::jthread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ a);
  return splitmix64(h ^ b);
}

Model local_train(const ClientState& client, const Model& global, const TrainOptions& options,
                  std::uint64_t stream_seed) {
  const Dataset& data = client.training_set();
  if (data.empty()) throw ProtocolError("local_train: client " + std::to_string(client.id) + " has no data");
  if (options.batch_size == 0) throw ConfigError("local_train: batch_size must be positive");

  Model local = global;
  Vector flat = local.flatten();
  AdamState adam(flat.size(), options.lr);
  std::mt19937_64 rng(stream_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const Sample*> batch;
  batch.reserve(options.batch_size);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data.samples[order[i]]);
      const Vector grad = backward(local, batch);
      adam_step(flat, grad, adam);
      local.unflatten(flat);
    }
  }
  return local;
}

namespace {

void normalize(Vector& w, WeightNorm norm) {
  if (norm == WeightNorm::Softmax) {
    const double peak = *std::max_element(w.begin(), w.end());
    double z = 0.0;
    for (double& x : w) {
      x = std::exp(x - peak);
      z += x;
    }
    for (double& x : w) x /= z;
  } else {
    const double z = std::accumulate(w.begin(), w.end(), 0.0);
    if (z <= 0.0) throw ConfigError("compute_weights: all weights vanished under linear normalization");
    for (double& x : w) x /= z;
  }
}

bool same_shape(const EncoderParams& a, const EncoderParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() || x.bias.size() != y.bias.size()) {
      return false;
    }
  }
  return true;
}

bool same_shape(const Model& a, const Model& b) {
  return same_shape(a.image, b.image) && same_shape(a.text, b.text) &&
         a.classifier.weight.rows() == b.classifier.weight.rows() &&
         a.classifier.weight.cols() == b.classifier.weight.cols() &&
         a.classifier.bias.size() == b.classifier.bias.size();
}

}  // namespace

AggregationWeights compute_weights(std::span<const ClientState> participants, RunMode mode, double alpha,
                                   WeightNorm norm) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha: must lie in [0, 1]");
  if (participants.empty()) throw ProtocolError("compute_weights: no participants");
  double total = 0.0;
  for (const auto& p : participants) total += static_cast<double>(p.training_set().size());
  if (total <= 0.0) throw ProtocolError("compute_weights: participants hold no data");

  AggregationWeights w;
  w.classifier.reserve(participants.size());
  for (const auto& p : participants) w.classifier.push_back(static_cast<double>(p.training_set().size()) / total);
  w.image = w.classifier;
  w.text = w.classifier;
  if (mode != RunMode::CarMfl) return w;

  bool scaled_image = false;
  bool scaled_text = false;
  for (std::size_t k = 0; k < participants.size(); ++k) {
    if (participants[k].is_public) continue;
    if (participants[k].regime == Regime::TextOnly) {
      w.image[k] *= alpha;
      scaled_image = true;
    } else if (participants[k].regime == Regime::ImageOnly) {
      w.text[k] *= alpha;
      scaled_text = true;
    }
  }
  if (scaled_image) normalize(w.image, norm);
  if (scaled_text) normalize(w.text, norm);
  return w;
}

Model aggregate(std::span<const Model> locals, const AggregationWeights& weights) {
  if (locals.empty()) throw ProtocolError("aggregate: no participants");
  const std::size_t n = locals.size();
  if (weights.image.size() != n || weights.text.size() != n || weights.classifier.size() != n) {
    throw ProtocolError("aggregate: weight vectors do not match the participant count");
  }
  const ModelLayout layout = locals.front().layout();
  std::vector<Vector> flats;
  flats.reserve(n);
  for (const auto& m : locals) {
    if (!same_shape(m, locals.front())) throw ProtocolError("aggregate: participant models differ in shape");
    flats.push_back(m.flatten());
  }

  Vector out(layout.total, 0.0);
  auto mix = [&](const ParameterBlock& block, const Vector& w) {
    for (std::size_t k = 0; k < n; ++k) {
      const double wk = w[k];
      const double* src = flats[k].data() + block.offset;
      double* dst = out.data() + block.offset;
      for (std::size_t i = 0; i < block.size; ++i) dst[i] += wk * src[i];
    }
  };
  mix(layout.image, weights.image);
  mix(layout.text, weights.text);
  mix(layout.classifier, weights.classifier);

  Model result = locals.front();
  result.unflatten(out);
  return result;
}

Federation::Federation(FederationSettings settings, std::vector<ClientState> participants, Dataset public_pool,
                       Dataset validation, Dataset test, Model initial)
    : settings_(settings),
      participants_(std::move(participants)),
      public_pool_(std::move(public_pool)),
      validation_(std::move(validation)),
      test_(std::move(test)),
      global_(std::move(initial)) {
  if (participants_.empty()) throw ProtocolError("federation: no participants");
  global_.validate();
}

RoundReport Federation::evaluate(int round) const {
  RoundReport r;
  r.round = round;
  r.mode = settings_.mode;
  r.val_auc = macro_auc(score_dataset(global_, validation_));
  r.per_class_auc = per_class_auc(score_dataset(global_, test_));
  r.test_auc = macro_auc(r.per_class_auc);
  if (auto share = modality_bias(global_.classifier)) {
    r.img_share = share->img;
    r.txt_share = share->txt;
  } else {
    r.img_share = r.txt_share = std::nan("");
  }
  r.mean_unique_pairs = pairing_stats(history_).mean;
  return r;
}

RoundReport Federation::run_round(int round) {
  const auto start = std::chrono::steady_clock::now();
  const bool augment = settings_.mode == RunMode::CarMfl;

  std::optional<RetrievalIndex> index;
  if (augment) {
    bool any_unimodal = false;
    for (const auto& p : participants_) any_unimodal |= p.regime != Regime::Multimodal;
    if (any_unimodal) index = build_index(global_, public_pool_, round);
  }

  const std::size_t n = participants_.size();
  std::vector<Model> locals(n);
  std::vector<std::vector<AugmentedPair>> pairs(n);
  parallel_for(n, settings_.threads, [&](std::size_t k) {
    ClientState& client = participants_[k];
    if (index && client.regime != Regime::Multimodal) {
      Augmentation aug = augment_client(client.data, *index, global_, settings_.top_k, round, client.id);
      client.augmented = std::move(aug.dataset);
      pairs[k] = std::move(aug.pairs);
    }
    const std::uint64_t stream = derive_seed(settings_.seed, 0x10ca1, static_cast<std::uint64_t>(client.id),
                                             static_cast<std::uint64_t>(round));
    locals[k] = local_train(client, global_, settings_.train, stream);
  });

  last_weights_ = compute_weights(participants_, settings_.mode, settings_.alpha, settings_.weight_norm);
  Model next = aggregate(locals, last_weights_);
  if (!settings_.freeze_global) global_ = std::move(next);

  last_pairs_.clear();
  for (auto& client_pairs : pairs) {
    for (auto& p : client_pairs) {
      last_pairs_.push_back(p);
      p.complementary.clear();
      p.complementary.shrink_to_fit();
      history_.push_back(std::move(p));
    }
  }

  RoundReport report = evaluate(round);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

ExperimentSetup make_setup(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ExperimentSetup setup;
  const PartitionConfig pc = cfg.partition_config();

  SignalConfig signal{cfg.img_signal, cfg.txt_signal, cfg.img_noise, cfg.txt_noise};
  setup.base_spec = make_generator(cfg.num_labels, cfg.img_dim, cfg.txt_dim, default_priors(cfg.num_labels),
                                   signal, derive_seed(seed, 1));
  const Dataset base = generate(setup.base_spec, base_samples_needed(pc), derive_seed(seed, 2), 0);
  std::optional<Dataset> shifted_data;
  if (pc.heterogeneous && pc.image_only + pc.text_only > 0) {
    const GeneratorSpec shifted_spec =
        shifted(setup.base_spec, ShiftConfig{cfg.feature_shift, cfg.prior_scale}, derive_seed(seed, 3));
    shifted_data = generate(shifted_spec, shifted_samples_needed(pc), derive_seed(seed, 4),
                            static_cast<SampleId>(base.size()));
  }
  setup.partition = partition(base, pc, shifted_data ? &*shifted_data : nullptr);

  const Partition& p = setup.partition;
  auto client_state = [](int id, const Dataset& ds, bool is_public) {
    ClientState c;
    c.id = id;
    c.regime = ds.regime;
    c.data = ds;
    c.is_public = is_public;
    return c;
  };
  const int k = static_cast<int>(p.clients.size());
  switch (cfg.mode) {
    case RunMode::CarMfl:
    case RunMode::MFedAvgP:
    case RunMode::MFedAvgPNoMissing:
      for (int i = 0; i < k; ++i) setup.participants.push_back(client_state(i, p.clients[i], false));
      setup.participants.push_back(client_state(k, p.public_pool, true));
      break;
    case RunMode::MFedAvg:
      for (int i = 0; i < k; ++i) setup.participants.push_back(client_state(i, p.clients[i], false));
      break;
    case RunMode::CentralUpper: {
      Dataset all;
      all.regime = Regime::Multimodal;
      for (const auto& c : p.clients) all.samples.insert(all.samples.end(), c.samples.begin(), c.samples.end());
      all.samples.insert(all.samples.end(), p.public_pool.samples.begin(), p.public_pool.samples.end());
      setup.participants.push_back(client_state(0, all, false));
      break;
    }
    case RunMode::PublicOnlyLower:
      setup.participants.push_back(client_state(0, p.public_pool, true));
      break;
  }

  ModelShape shape{cfg.img_dim, cfg.txt_dim, cfg.hidden_dim, cfg.feature_dim, cfg.num_labels};
  std::mt19937_64 init_rng(derive_seed(seed, 5));
  setup.initial = make_model(shape, init_rng);
  return setup;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const RoundObserver& observer) {
  ExperimentSetup setup = make_setup(cfg, seed);
  FederationSettings settings;
  settings.mode = cfg.mode;
  settings.train = TrainOptions{cfg.local_epochs, cfg.batch_size, cfg.lr};
  settings.top_k = cfg.top_k;
  settings.alpha = cfg.alpha;
  settings.weight_norm = cfg.weight_norm;
  settings.seed = seed;
  settings.threads = cfg.threads;
  settings.freeze_global = cfg.freeze_global;

  Federation fed(settings, std::move(setup.participants), setup.partition.public_pool,
                 setup.partition.validation, setup.partition.test, std::move(setup.initial));

  ExperimentResult result;
  result.history.push_back(fed.evaluate(0));
  result.final_report = result.history.front();
  result.final_model = fed.global_model();
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    RoundReport report = fed.run_round(static_cast<int>(r));
    if (observer) observer(report, fed.global_model(), fed.last_round_pairs());
    if (report.val_auc > result.final_report.val_auc) {
      result.final_report = report;
      result.final_model = fed.global_model();
    }
    result.history.push_back(std::move(report));
  }
  result.pairing_history = fed.pairing_history();
  return result;
}

}  // namespace carmfl

// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. The benchmark criteria load
// configs/benchmark_homogeneous.cfg from the source tree.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "carmfl/config.hpp"
#include "carmfl/errors.hpp"
#include "carmfl/federation.hpp"
#include "carmfl/metrics.hpp"
#include "carmfl/retrieval.hpp"
#include "carmfl/runner.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace carmfl;
using carmfl::testing::Presence;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool bit_identical(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

std::size_t param_count(const ModelShape& s) {
  auto enc = [&](std::size_t in) { return in * s.hidden_dim + s.hidden_dim + s.hidden_dim * s.feature_dim + s.feature_dim; };
  return enc(s.img_dim) + enc(s.txt_dim) + s.num_labels * 2 * s.feature_dim + s.num_labels;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> dim(1, 8), batch_size(1, 6), presence(0, 2);
  double worst = 0.0;
  std::size_t max_params = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelShape shape;
    do {
      shape = ModelShape{dim(rng), dim(rng), dim(rng), dim(rng), dim(rng)};
    } while (param_count(shape) > 500);
    const Model m = testing::random_model(shape, rng);
    max_params = std::max(max_params, m.parameter_count());
    std::vector<Sample> batch;
    const std::size_t n = batch_size(rng);
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(testing::random_sample(shape, rng, static_cast<Presence>(presence(rng)), static_cast<SampleId>(i)));
    }
    const auto ptrs = testing::pointers(batch);
    worst = std::max(worst, oracle::max_relative_error(backward(m, ptrs), oracle::finite_difference_gradient(m, ptrs, 1e-5)));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          fmt("100 models (<= %zu params), max rel err %.3g (< 1e-4), %.2f s (< 30 s)", max_params, worst, secs)};
}

Outcome retrieval_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> pool_size(10, 1000), dim(1, 64), labels(1, 14);
  std::size_t topk_mismatch = 0, refine_mismatch = 0, queries = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = pool_size(rng), d = dim(rng), num_labels = labels(rng);
    RetrievalIndex idx;
    idx.image_features = Matrix(n, d);
    std::vector<SampleId> ids(n);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t r = 0; r < n; ++r) {
      ids[r] = static_cast<SampleId>(5 * n - 3 * r);  // ids deliberately not in row order
      idx.labels.push_back(testing::random_labels(num_labels, rng, 0.3));
      // roughly one row in eight duplicates an earlier row to force distance ties
      const bool dup = r > 0 && pick(rng) % 8 == 0;
      const std::size_t src = dup ? pick(rng) % r : 0;
      const Vector v = l2_normalize(testing::random_vector(d, rng));
      for (std::size_t c = 0; c < d; ++c) idx.image_features(r, c) = dup ? idx.image_features(src, c) : v[c];
    }
    idx.ids = ids;
    for (int q = 0; q < 20; ++q) {
      ++queries;
      Vector query;
      if (q % 3 == 0) {
        const auto row = idx.image_features.row(pick(rng));
        query.assign(row.begin(), row.end());
      } else {
        query = l2_normalize(testing::random_vector(d, rng));
      }
      const std::size_t k = std::min<std::size_t>(10, n);
      const TopKSet got = topk(idx, query, Modality::Image, k);
      const auto want = oracle::brute_force_topk(idx.image_features, ids, query, k);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].id == want[i].first && got[i].distance == want[i].second;
      }
      topk_mismatch += same ? 0 : 1;

      const MultiHot ql = testing::random_labels(num_labels, rng, 0.3);
      std::vector<MultiHot> cand_labels;
      for (const auto& c : got) cand_labels.push_back(idx.labels[c.row]);
      const Neighbor chosen = refine(got, ql, idx);
      refine_mismatch += chosen.row == got[oracle::exhaustive_refine(cand_labels, ql)].row ? 0 : 1;
    }
  }
  const double secs = seconds_since(t0);
  return {topk_mismatch == 0 && refine_mismatch == 0 && secs < 10.0,
          fmt("50 pools, %zu queries: %zu top-k and %zu refine mismatches, %.2f s (< 10 s)", queries, topk_mismatch,
              refine_mismatch, secs)};
}

Outcome aggregation_oracle() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> count(1, 8), dim(1, 6), regime(0, 2), size(1, 50);
  std::uniform_real_distribution<double> alpha(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const ModelShape shape{dim(rng), dim(rng), dim(rng), dim(rng), dim(rng)};
    const std::size_t n = count(rng);
    std::vector<Model> locals;
    std::vector<Vector> flats;
    std::vector<ClientState> participants(n);
    for (std::size_t k = 0; k < n; ++k) {
      locals.push_back(testing::random_model(shape, rng, 1.0));
      flats.push_back(locals.back().flatten());
      participants[k].id = static_cast<int>(k);
      participants[k].regime = static_cast<Regime>(regime(rng));
      participants[k].data.samples.resize(size(rng));
    }
    const RunMode mode = trial % 2 == 0 ? RunMode::CarMfl : RunMode::MFedAvgP;
    const AggregationWeights w =
        compute_weights(participants, mode, alpha(rng), trial % 4 < 2 ? WeightNorm::Softmax : WeightNorm::Linear);
    const Model out = aggregate(locals, w);
    const ModelLayout layout = out.layout();
    const Vector got = out.flatten();
    for (const auto& [block, weights] : {std::pair{layout.image, w.image}, std::pair{layout.text, w.text},
                                         std::pair{layout.classifier, w.classifier}}) {
      const Vector want = oracle::weighted_mean(flats, weights, block.offset, block.size);
      for (std::size_t i = 0; i < block.size; ++i) worst = std::max(worst, std::abs(got[block.offset + i] - want[i]));
    }
  }
  return {worst <= 1e-12, fmt("200 participant sets (<= 8 models), max abs err %.3g (<= 1e-12)", worst)};
}

Outcome weight_readjustment() {
  auto state = [](int id, Regime r, std::size_t n, bool is_public = false) {
    ClientState c;
    c.id = id;
    c.regime = r;
    c.is_public = is_public;
    c.data.samples.resize(n);
    return c;
  };
  auto round4 = [](double x) { return std::round(x * 1e4) / 1e4; };
  const std::vector<ClientState> two{state(0, Regime::ImageOnly, 10), state(1, Regime::Multimodal, 10)};
  const auto lin = compute_weights(two, RunMode::CarMfl, 0.3, WeightNorm::Linear);
  const auto soft = compute_weights(two, RunMode::CarMfl, 0.3, WeightNorm::Softmax);
  const bool examples = round4(lin.text[0]) == 0.2308 && round4(lin.text[1]) == 0.7692 &&
                        round4(soft.text[0]) == 0.4134 && round4(soft.text[1]) == 0.5866;

  bool base_exact = true;
  bool classifier_base = true;
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> count(1, 8), size(1, 300), regime(0, 2);
  std::uniform_real_distribution<double> alpha(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = count(rng);
    std::vector<ClientState> mm, mixed;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t sz = size(rng);
      mm.push_back(state(static_cast<int>(k), Regime::Multimodal, sz, k + 1 == n));
      mixed.push_back(state(static_cast<int>(k), static_cast<Regime>(regime(rng)), sz, false));
    }
    double total = 0.0;
    for (const auto& c : mm) total += static_cast<double>(c.data.size());
    Vector base;
    for (const auto& c : mm) base.push_back(static_cast<double>(c.data.size()) / total);
    const WeightNorm norm = trial % 2 ? WeightNorm::Softmax : WeightNorm::Linear;
    const double a = alpha(rng);
    const auto w = compute_weights(mm, RunMode::CarMfl, a, norm);
    base_exact &= bit_identical(w.image, base) && bit_identical(w.text, base) && bit_identical(w.classifier, base);
    if (a > 0.0 || norm == WeightNorm::Softmax) {
      const auto wm = compute_weights(mixed, RunMode::CarMfl, a, norm);
      classifier_base &= bit_identical(wm.classifier, base);
    }
  }
  return {examples && base_exact && classifier_base,
          fmt("linear (%.4f, %.4f), softmax (%.4f, %.4f); no-unimodal base exact: %s; classifier base: %s",
              lin.text[0], lin.text[1], soft.text[0], soft.text[1], base_exact ? "yes" : "no",
              classifier_base ? "yes" : "no")};
}

Outcome auc_oracle() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<std::size_t> len(2, 200);
  double worst = 0.0;
  std::size_t monotone_violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = len(rng);
    Vector scores = testing::random_vector(n, rng);
    if (trial % 2 == 0) {
      for (double& s : scores) s = std::round(s * 4.0) / 4.0;  // many ties
    }
    auto labels = testing::random_labels(n, rng, 0.35);
    labels[0] = 1;
    labels[n - 1] = 0;
    const double got = *roc_auc(scores, labels);
    worst = std::max(worst, std::abs(got - oracle::pair_count_auc(scores, labels)));
    for (const auto& f : std::vector<std::function<double(double)>>{
             [](double s) { return std::exp(s); }, [](double s) { return 3.0 * s - 2.0; },
             [](double s) { return std::atan(s) + s * s * s; }}) {
      Vector t(n);
      for (std::size_t i = 0; i < n; ++i) t[i] = f(scores[i]);
      monotone_violations += *roc_auc(t, labels) == got ? 0 : 1;
    }
  }
  return {worst <= 1e-9 && monotone_violations == 0,
          fmt("100 instances (n <= 200), max abs err %.3g (<= 1e-9), %zu monotone-transform violations", worst,
              monotone_violations)};
}

// ---------------------------------------------------------------------------
// Benchmark runs shared by the direction criteria.

struct BenchRun {
  std::vector<ExperimentResult> per_seed;
  double seconds = 0.0;

  double mean_test_auc() const {
    double s = 0.0;
    for (const auto& r : per_seed) s += r.final_report.test_auc;
    return s / static_cast<double>(per_seed.size());
  }
};

class Benchmark {
 public:
  explicit Benchmark(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

  const ExperimentConfig& config() const { return cfg_; }

  const BenchRun& run(RunMode mode) {
    auto it = runs_.find(mode);
    if (it != runs_.end()) return it->second;
    ExperimentConfig c = cfg_;
    c.mode = mode;
    BenchRun r;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed : c.seeds) r.per_seed.push_back(run_experiment(c, seed));
    r.seconds = seconds_since(t0);
    std::cerr << "  " << to_string(mode) << ": mean test AUC " << fmt("%.4f", r.mean_test_auc()) << '\n';
    return runs_.emplace(mode, std::move(r)).first->second;
  }

 private:
  ExperimentConfig cfg_;
  std::map<RunMode, BenchRun> runs_;
};

Outcome table_direction(Benchmark& b) {
  const double car = b.run(RunMode::CarMfl).mean_test_auc();
  const double plain = b.run(RunMode::MFedAvg).mean_test_auc();
  const double pub = b.run(RunMode::MFedAvgP).mean_test_auc();
  const double secs = b.run(RunMode::CarMfl).seconds + b.run(RunMode::MFedAvg).seconds + b.run(RunMode::MFedAvgP).seconds;
  const bool margin = car - plain >= 0.02;
  const bool p_ok = pub <= car;
  return {margin && p_ok && secs < 600.0,
          fmt("CAR-MFL %.4f, mFedAvg %.4f (margin %.4f >= 0.02), mFedAvgP %.4f (<= CAR-MFL), %.1f s (< 600 s)", car,
              plain, car - plain, pub, secs)};
}

Outcome modality_balance(Benchmark& b) {
  const auto& car = b.run(RunMode::CarMfl).per_seed;
  const auto& pub = b.run(RunMode::MFedAvgP).per_seed;
  bool ok = true;
  std::string detail;
  for (std::size_t s = 0; s < car.size(); ++s) {
    const RoundReport& c = car[s].history.back();
    const RoundReport& p = pub[s].history.back();
    const bool seed_ok = c.txt_share > p.txt_share && std::abs(c.img_share - c.txt_share) < std::abs(p.img_share - p.txt_share);
    ok &= seed_ok;
    detail += fmt("%sseed %llu txt_share %.3f vs %.3f", s ? "; " : "",
                  static_cast<unsigned long long>(b.config().seeds[s]), c.txt_share, p.txt_share);
  }
  return {ok, "final round, CAR-MFL vs mFedAvgP: " + detail};
}

Outcome bound_ordering(Benchmark& b) {
  const double upper = b.run(RunMode::CentralUpper).mean_test_auc();
  const double car = b.run(RunMode::CarMfl).mean_test_auc();
  const double lower = b.run(RunMode::PublicOnlyLower).mean_test_auc();
  return {upper >= car && car >= lower, fmt("central %.4f >= CAR-MFL %.4f >= public-only %.4f", upper, car, lower)};
}

Outcome no_missing_equivalence(const ExperimentConfig& bench) {
  ExperimentConfig cfg = bench;
  cfg.partition = {0, 0, 10};
  const std::uint64_t seed = cfg.seeds.front();
  std::vector<Vector> car, pub;
  std::size_t pairs = 0;
  cfg.mode = RunMode::CarMfl;
  run_experiment(cfg, seed, [&](const RoundReport&, const Model& m, std::span<const AugmentedPair> p) {
    car.push_back(m.flatten());
    pairs += p.size();
  });
  cfg.mode = RunMode::MFedAvgP;
  run_experiment(cfg, seed, [&](const RoundReport&, const Model& m, std::span<const AugmentedPair>) {
    pub.push_back(m.flatten());
  });
  std::size_t identical = 0;
  for (std::size_t r = 0; r < std::min(car.size(), pub.size()); ++r) identical += bit_identical(car[r], pub[r]) ? 1 : 0;
  const bool ok = car.size() == cfg.rounds && pub.size() == cfg.rounds && identical == cfg.rounds && pairs == 0;
  return {ok, fmt("0:0:10, seed %llu: %zu/%zu rounds bit-identical", static_cast<unsigned long long>(seed), identical,
                  cfg.rounds)};
}

Outcome dynamic_augmentation(Benchmark& b) {
  const auto& car = b.run(RunMode::CarMfl).per_seed;
  const ExperimentResult& live = car.front();
  const double mean = pairing_stats(live.pairing_history).mean;

  ExperimentConfig frozen = b.config();
  frozen.mode = RunMode::CarMfl;
  frozen.freeze_global = true;
  const ExperimentResult f = run_experiment(frozen, frozen.seeds.front());
  const PairingStats fs = pairing_stats(f.pairing_history);
  std::size_t not_one = 0;
  for (const auto& [id, n] : fs.unique_partners) not_one += n == 1 ? 0 : 1;
  const bool ok = mean > 1.0 && not_one == 0 && !fs.unique_partners.empty();
  return {ok, fmt("mean unique partners over %zu rounds %.3f (> 1); frozen: %zu of %zu samples with a count != 1",
                  b.config().rounds, mean, not_one, fs.unique_partners.size())};
}

Outcome determinism(Benchmark& b) {
  const ExperimentConfig& cfg = b.config();
  const std::uint64_t seed = cfg.seeds.front();
  ExperimentConfig car = cfg;
  car.mode = RunMode::CarMfl;
  const std::string first = history_csv(car, seed, b.run(RunMode::CarMfl).per_seed.front().history);
  const std::string second = history_csv(car, seed, run_experiment(car, seed).history);
  ExperimentConfig threaded = car;
  threaded.threads = 4;
  const std::string third = history_csv(car, seed, run_experiment(threaded, seed).history);
  return {first == second && first == third,
          fmt("history CSV (%zu bytes) rerun identical: %s; with 4 threads: %s", first.size(),
              first == second ? "yes" : "no", first == third ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::string config_path = std::string(CARMFL_SOURCE_DIR) + "/configs/benchmark_homogeneous.cfg";
  ExperimentConfig bench_cfg;
  try {
    bench_cfg = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "cannot load " << config_path << ": " << e.what() << '\n';
    return 2;
  }
  Benchmark bench(bench_cfg);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"retrieval oracle", retrieval_oracle},
      {"aggregation oracle", aggregation_oracle},
      {"weight re-adjustment", weight_readjustment},
      {"AUC oracle", auc_oracle},
      {"CAR-MFL beats zero-fill baselines", [&] { return table_direction(bench); }},
      {"balanced modality weights", [&] { return modality_balance(bench); }},
      {"upper >= CAR-MFL >= lower", [&] { return bound_ordering(bench); }},
      {"no-missing equivalence", [&] { return no_missing_equivalence(bench_cfg); }},
      {"dynamic augmentation", [&] { return dynamic_augmentation(bench); }},
      {"determinism", [&] { return determinism(bench); }},
  };

  const auto t0 = std::chrono::steady_clock::now();
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " criteria passed in " << fmt("%.1f", seconds_since(t0)) << " s" << std::endl;
  return failures == 0 ? 0 : 1;
}

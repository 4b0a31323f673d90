// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "carmfl/runner.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "carmfl/errors.hpp"

namespace carmfl {

namespace fs = std::filesystem;
using nlohmann::json;

SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "alpha") return SweepAxis::Alpha;
  if (s == "public_size") return SweepAxis::PublicSize;
  if (s == "partition") return SweepAxis::Partition;
  throw ConfigError("axis: expected alpha, public_size or partition, got '" + std::string(s) + "'");
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::PublicSize: return "public_size";
    case SweepAxis::Partition: return "partition";
  }
  return "unknown";
}

std::vector<std::uint64_t> parse_seed_list(std::string_view s) {
  std::vector<std::uint64_t> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string_view::npos) end = s.size();
    std::string_view item = s.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || p != item.data() + item.size()) {
      throw ConfigError("seeds: expected a comma-separated list of unsigned integers, got '" + std::string(s) + "'");
    }
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

ExperimentConfig apply(ExperimentConfig cfg, const RunOverrides& o) {
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.seeds) cfg.seeds = *o.seeds;
  cfg.validate();
  return cfg;
}

// Runs one seed, writing the history CSV and optional artifacts under `dir`.
SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  std::ofstream augmentation;
  if (!dir.empty()) fs::create_directories(dir);
  if (!dir.empty() && cfg.dump_augmentation) {
    augmentation.open(dir / "augmentation.csv");
    std::vector<AugmentedPair> none;
    write_augmentation_csv(augmentation, none, true);
  }
  RoundObserver observer = [&](const RoundReport& report, const Model& model, std::span<const AugmentedPair> pairs) {
    if (dir.empty()) return;
    if (cfg.checkpoints) {
      char name[32];
      std::snprintf(name, sizeof name, "round_%03d.bin", report.round);
      fs::create_directories(dir / "checkpoints");
      save_parameters((dir / "checkpoints" / name).string(), model.flatten());
    }
    if (augmentation.is_open()) write_augmentation_csv(augmentation, pairs, false);
  };
  SeedOutcome out{seed, run_experiment(cfg, seed, observer)};
  if (!dir.empty()) write_file(dir / "history.csv", history_csv(cfg, seed, out.result.history));
  return out;
}

template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

std::string history_csv(const ExperimentConfig& cfg, std::uint64_t seed, const std::vector<RoundReport>& history) {
  std::ostringstream out;
  out << "# config_hash=" << config_hash(cfg) << " seed=" << seed << " auc_rule=" << kAucSkipRule << '\n';
  out << "round,mode,val_auc,test_auc";
  for (std::size_t c = 0; c < cfg.num_labels; ++c) out << ",auc_class_" << c;
  out << ",img_weight_share,txt_weight_share,mean_unique_pairs\n";
  for (const auto& r : history) {
    out << r.round << ',' << to_string(r.mode) << ',' << num(r.val_auc) << ',' << num(r.test_auc);
    for (const auto& a : r.per_class_auc) out << ',' << num(a.value_or(std::nan("")));
    out << ',' << num(r.img_share) << ',' << num(r.txt_share) << ',' << num(r.mean_unique_pairs) << '\n';
  }
  return out.str();
}

std::optional<double> rare_class_auc(const ExperimentConfig& cfg, const RoundReport& report) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c : rare_label_indices(default_priors(cfg.num_labels))) {
    if (c < report.per_class_auc.size() && report.per_class_auc[c]) {
      sum += *report.per_class_auc[c];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

json summary_json(const ExperimentConfig& cfg, const std::vector<SeedOutcome>& outcomes) {
  json per_seed = json::array();
  double sum_test = 0, sum_val = 0, sum_img = 0, sum_txt = 0;
  double min_test = 1.0, max_test = 0.0;
  for (const auto& o : outcomes) {
    const RoundReport& r = o.result.final_report;
    json classes = json::array();
    for (const auto& a : r.per_class_auc) classes.push_back(optional_json(a));
    double wall = 0.0;
    for (const auto& h : o.result.history) wall += h.wall_seconds;
    per_seed.push_back({{"seed", o.seed},
                        {"best_round", r.round},
                        {"val_auc", r.val_auc},
                        {"test_auc", r.test_auc},
                        {"per_class_auc", classes},
                        {"rare_class_auc", optional_json(rare_class_auc(cfg, r))},
                        {"img_share", r.img_share},
                        {"txt_share", r.txt_share},
                        {"mean_unique_pairs", pairing_stats(o.result.pairing_history).mean},
                        {"wall_seconds", wall}});
    sum_test += r.test_auc;
    sum_val += r.val_auc;
    sum_img += r.img_share;
    sum_txt += r.txt_share;
    min_test = std::min(min_test, r.test_auc);
    max_test = std::max(max_test, r.test_auc);
  }
  const double n = outcomes.empty() ? 1.0 : static_cast<double>(outcomes.size());
  return json{{"config_hash", config_hash(cfg)},
              {"mode", std::string(to_string(cfg.mode))},
              {"partition", to_string(cfg.partition)},
              {"setup", cfg.heterogeneous ? "heterogeneous" : "homogeneous"},
              {"auc_rule", kAucSkipRule},
              {"selection", "checkpoint with the best validation macro AUC"},
              {"per_seed", per_seed},
              {"mean",
               {{"test_auc", sum_test / n},
                {"val_auc", sum_val / n},
                {"img_share", sum_img / n},
                {"txt_share", sum_txt / n},
                {"test_auc_min", min_test},
                {"test_auc_max", max_test}}}};
}

std::size_t axis_length(const ExperimentConfig& cfg, SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Alpha: return cfg.sweep_alpha.size();
    case SweepAxis::PublicSize: return cfg.sweep_public_size.size();
    case SweepAxis::Partition: return cfg.sweep_partition.size();
  }
  return 0;
}

std::string axis_value_label(const ExperimentConfig& cfg, SweepAxis axis, std::size_t index) {
  switch (axis) {
    case SweepAxis::Alpha: {
      char buf[32];
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, cfg.sweep_alpha.at(index));
      return std::string(buf, p);
    }
    case SweepAxis::PublicSize: return std::to_string(cfg.sweep_public_size.at(index));
    case SweepAxis::Partition: return to_string(cfg.sweep_partition.at(index));
  }
  return {};
}

ExperimentConfig with_axis_value(const ExperimentConfig& base, SweepAxis axis, std::size_t index) {
  ExperimentConfig cfg = base;
  switch (axis) {
    case SweepAxis::Alpha: cfg.alpha = base.sweep_alpha.at(index); break;
    case SweepAxis::PublicSize: cfg.public_size = base.sweep_public_size.at(index); break;
    case SweepAxis::Partition: cfg.partition = base.sweep_partition.at(index); break;
  }
  cfg.validate();
  return cfg;
}

std::string run_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::string& out_dir, std::ostream& log) {
  const std::size_t n = axis_length(cfg, axis);
  if (n == 0) throw ConfigError("sweep_" + std::string(to_string(axis)) + ": axis value list is empty");
  std::ostringstream csv;
  csv << "# config_hash=" << config_hash(cfg) << " seeds=";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) csv << (i ? "," : "") << cfg.seeds[i];
  csv << " axis=" << to_string(axis) << " mode=" << to_string(cfg.mode) << '\n';
  csv << "axis,value,seed,test_auc,val_auc,rare_class_auc,img_share,txt_share,mean_unique_pairs\n";
  for (std::size_t i = 0; i < n; ++i) {
    const ExperimentConfig run_cfg = with_axis_value(cfg, axis, i);
    const std::string label = axis_value_label(cfg, axis, i);
    double sums[6] = {0, 0, 0, 0, 0, 0};
    std::size_t rare_count = 0;
    for (std::uint64_t seed : cfg.seeds) {
      fs::path dir;
      if (!out_dir.empty()) {
        std::string sub = label;
        for (char& c : sub) {
          if (c == ':') c = '-';
        }
        dir = fs::path(out_dir) / ("sweep_" + std::string(to_string(axis))) / sub / ("seed_" + std::to_string(seed));
      }
      const SeedOutcome o = run_seed(run_cfg, seed, dir);
      const RoundReport& r = o.result.final_report;
      const auto rare = rare_class_auc(run_cfg, r);
      const double unique = pairing_stats(o.result.pairing_history).mean;
      csv << to_string(axis) << ',' << label << ',' << seed << ',' << num(r.test_auc) << ',' << num(r.val_auc)
          << ',' << num(rare.value_or(std::nan(""))) << ',' << num(r.img_share) << ',' << num(r.txt_share) << ','
          << num(unique) << '\n';
      sums[0] += r.test_auc;
      sums[1] += r.val_auc;
      if (rare) {
        sums[2] += *rare;
        ++rare_count;
      }
      sums[3] += r.img_share;
      sums[4] += r.txt_share;
      sums[5] += unique;
      log << to_string(axis) << '=' << label << " seed=" << seed << " test_auc=" << num(r.test_auc) << '\n';
    }
    const double k = static_cast<double>(cfg.seeds.size());
    csv << to_string(axis) << ',' << label << ",mean," << num(sums[0] / k) << ',' << num(sums[1] / k) << ','
        << num(rare_count ? sums[2] / static_cast<double>(rare_count) : std::nan("")) << ',' << num(sums[3] / k)
        << ',' << num(sums[4] / k) << ',' << num(sums[5] / k) << '\n';
  }
  return csv.str();
}

int run_command(const std::string& config_path, const RunOverrides& overrides, std::ostream& log) {
  return guarded(log, [&] {
    const ExperimentConfig cfg = apply(load_config(config_path), overrides);
    const fs::path out(cfg.out_dir);
    write_file(out / "config.txt", serialize_config(cfg));
    std::vector<SeedOutcome> outcomes;
    for (std::uint64_t seed : cfg.seeds) {
      outcomes.push_back(run_seed(cfg, seed, out / ("seed_" + std::to_string(seed))));
      const RoundReport& r = outcomes.back().result.final_report;
      log << to_string(cfg.mode) << ' ' << to_string(cfg.partition) << " seed=" << seed
          << " best_round=" << r.round << " test_auc=" << num(r.test_auc) << '\n';
    }
    write_file(out / "summary.json", summary_json(cfg, outcomes).dump(2) + "\n");
    return 0;
  });
}

int sweep_command(const std::string& config_path, SweepAxis axis, const RunOverrides& overrides, std::ostream& log) {
  return guarded(log, [&] {
    const ExperimentConfig cfg = apply(load_config(config_path), overrides);
    if (axis_length(cfg, axis) == 0) {
      throw ConfigError("sweep_" + std::string(to_string(axis)) + ": axis value list is empty");
    }
    const fs::path out(cfg.out_dir);
    write_file(out / "config.txt", serialize_config(cfg));
    const std::string csv = run_sweep(cfg, axis, out.string(), log);
    write_file(out / ("sweep_" + std::string(to_string(axis)) + ".csv"), csv);
    return 0;
  });
}

int gen_data_command(const std::string& config_path, const RunOverrides& overrides, std::ostream& log) {
  return guarded(log, [&] {
    const ExperimentConfig cfg = apply(load_config(config_path), overrides);
    for (std::uint64_t seed : cfg.seeds) {
      const ExperimentSetup setup = make_setup(cfg, seed);
      const fs::path dir = fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed));
      fs::create_directories(dir);
      const Partition& p = setup.partition;
      for (std::size_t c = 0; c < p.clients.size(); ++c) {
        save_jsonl((dir / ("client_" + std::to_string(c) + ".jsonl")).string(), p.clients[c]);
      }
      save_jsonl((dir / "public.jsonl").string(), p.public_pool);
      save_jsonl((dir / "val.jsonl").string(), p.validation);
      save_jsonl((dir / "test.jsonl").string(), p.test);
      log << "wrote " << p.clients.size() << " client datasets to " << dir.string() << '\n';
    }
    return 0;
  });
}

}  // namespace carmfl

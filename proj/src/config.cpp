// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "carmfl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "carmfl/errors.hpp"

namespace carmfl {

std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::CarMfl: return "car_mfl";
    case RunMode::MFedAvg: return "mfedavg";
    case RunMode::MFedAvgP: return "mfedavg_p";
    case RunMode::CentralUpper: return "central_upper";
    case RunMode::PublicOnlyLower: return "public_only_lower";
    case RunMode::MFedAvgPNoMissing: return "mfedavg_p_nm";
  }
  return "unknown";
}

RunMode parse_run_mode(std::string_view s) {
  for (RunMode m : {RunMode::CarMfl, RunMode::MFedAvg, RunMode::MFedAvgP, RunMode::CentralUpper,
                    RunMode::PublicOnlyLower, RunMode::MFedAvgPNoMissing}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("mode: unknown run mode '" + std::string(s) + "'");
}

std::string_view to_string(WeightNorm n) { return n == WeightNorm::Softmax ? "softmax" : "linear"; }

WeightNorm parse_weight_norm(std::string_view s) {
  if (s == "softmax") return WeightNorm::Softmax;
  if (s == "linear") return WeightNorm::Linear;
  throw ConfigError("weight_norm: expected 'softmax' or 'linear', got '" + std::string(s) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected an unsigned integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T, typename Fn>
std::string join(const std::vector<T>& xs, Fn&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += fmt(xs[i]);
  }
  return out;
}

template <typename T, typename Fn>
std::vector<T> parse_list(std::string_view v, Fn&& parse) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  for (auto item : split(v, ',')) out.push_back(parse(item));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  const char* key;
  Setter set;
  Getter get;
  bool affects_results = true;
};

#define SIZE_FIELD(name) \
  Field { #name, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.name = to_size(k, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.name); } }
#define DOUBLE_FIELD(name) \
  Field { #name, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.name = to_double(k, v); }, \
          [](const ExperimentConfig& c) { return fmt_double(c.name); } }
#define BOOL_FIELD(name) \
  Field { #name, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.name = to_bool(k, v); }, \
          [](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"mode", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.mode = parse_run_mode(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.mode)); }},
      {"partition",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.partition = parse_client_split(v); },
       [](const ExperimentConfig& c) { return to_string(c.partition); }},
      {"setup",
       [](ExperimentConfig& c, std::string_view, std::string_view v) {
         if (v == "homogeneous") {
           c.heterogeneous = false;
         } else if (v == "heterogeneous") {
           c.heterogeneous = true;
         } else {
           throw ConfigError("setup: expected 'homogeneous' or 'heterogeneous', got '" + std::string(v) + "'");
         }
       },
       [](const ExperimentConfig& c) { return std::string(c.heterogeneous ? "heterogeneous" : "homogeneous"); }},
      SIZE_FIELD(num_labels),
      SIZE_FIELD(img_dim),
      SIZE_FIELD(txt_dim),
      DOUBLE_FIELD(img_signal),
      DOUBLE_FIELD(txt_signal),
      DOUBLE_FIELD(img_noise),
      DOUBLE_FIELD(txt_noise),
      DOUBLE_FIELD(feature_shift),
      DOUBLE_FIELD(prior_scale),
      SIZE_FIELD(samples_per_client),
      SIZE_FIELD(public_size),
      SIZE_FIELD(val_size),
      SIZE_FIELD(test_size),
      SIZE_FIELD(hidden_dim),
      SIZE_FIELD(feature_dim),
      SIZE_FIELD(rounds),
      SIZE_FIELD(local_epochs),
      SIZE_FIELD(batch_size),
      DOUBLE_FIELD(lr),
      SIZE_FIELD(top_k),
      DOUBLE_FIELD(alpha),
      {"weight_norm",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.weight_norm = parse_weight_norm(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.weight_norm)); }},
      BOOL_FIELD(freeze_global),
      {"seeds",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.seeds = parse_list<std::uint64_t>(v, [&](std::string_view x) { return to_u64(k, x); });
       },
       [](const ExperimentConfig& c) {
         return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
       }},
      {"out_dir", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.out_dir = std::string(v); },
       [](const ExperimentConfig& c) { return c.out_dir; }, false},
      {"threads", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.threads = to_size(k, v); },
       [](const ExperimentConfig& c) { return std::to_string(c.threads); }, false},
      BOOL_FIELD(checkpoints),
      BOOL_FIELD(dump_augmentation),
      {"sweep_alpha",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.sweep_alpha = parse_list<double>(v, [&](std::string_view x) { return to_double(k, x); });
       },
       [](const ExperimentConfig& c) { return join(c.sweep_alpha, fmt_double); }},
      {"sweep_public_size",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.sweep_public_size = parse_list<std::size_t>(v, [&](std::string_view x) { return to_size(k, x); });
       },
       [](const ExperimentConfig& c) {
         return join(c.sweep_public_size, [](std::size_t s) { return std::to_string(s); });
       }},
      {"sweep_partition",
       [](ExperimentConfig& c, std::string_view, std::string_view v) {
         c.sweep_partition = parse_list<ClientSplit>(v, [](std::string_view x) { return parse_client_split(x); });
       },
       [](const ExperimentConfig& c) {
         return join(c.sweep_partition, [](const ClientSplit& s) { return to_string(s); });
       }},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

ClientSplit parse_client_split(std::string_view s) {
  const auto parts = split(s, ':');
  if (parts.size() != 3) throw ConfigError("partition: expected I:T:M, got '" + std::string(s) + "'");
  ClientSplit out{to_size("partition", parts[0]), to_size("partition", parts[1]), to_size("partition", parts[2])};
  if (out.total() == 0) throw ConfigError("partition: I + T + M must be at least 1");
  return out;
}

std::string to_string(const ClientSplit& split) {
  return std::to_string(split.image_only) + ":" + std::to_string(split.text_only) + ":" +
         std::to_string(split.multimodal);
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (partition.total() == 0) fail("partition: I + T + M must be at least 1");
  if (num_labels == 0) fail("num_labels: must be positive");
  if (img_dim == 0 || txt_dim == 0) fail("img_dim/txt_dim: must be positive");
  if (hidden_dim == 0 || feature_dim == 0) fail("hidden_dim/feature_dim: must be positive");
  if (!(img_noise >= 0.0) || !(txt_noise >= 0.0)) fail("img_noise/txt_noise: must be non-negative");
  if (!(img_signal >= 0.0) || !(txt_signal >= 0.0)) fail("img_signal/txt_signal: must be non-negative");
  if (!(prior_scale > 0.0)) fail("prior_scale: must be positive");
  if (samples_per_client == 0) fail("samples_per_client: must be positive");
  if (val_size == 0) fail("val_size: must be positive");
  if (test_size == 0) fail("test_size: must be positive");
  if (local_epochs == 0) fail("local_epochs: must be positive");
  if (batch_size == 0) fail("batch_size: must be positive");
  if (!(lr >= 0.0)) fail("lr: must be non-negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha: must lie in [0, 1]");
  if (seeds.empty()) fail("seeds: at least one seed required");
  const bool uses_public = mode == RunMode::CarMfl || mode == RunMode::MFedAvgP ||
                           mode == RunMode::MFedAvgPNoMissing || mode == RunMode::CentralUpper ||
                           mode == RunMode::PublicOnlyLower;
  if (uses_public && public_size == 0) fail("public_size: mode '" + std::string(to_string(mode)) + "' needs a public pool");
  if (mode == RunMode::CarMfl && partition.image_only + partition.text_only > 0) {
    if (top_k == 0 || top_k > public_size) fail("top_k: must lie in [1, public_size]");
  }
  for (double a : sweep_alpha) {
    if (!(a >= 0.0 && a <= 1.0)) fail("sweep_alpha: values must lie in [0, 1]");
  }
}

PartitionConfig ExperimentConfig::partition_config() const {
  PartitionConfig p;
  p.image_only = partition.image_only;
  p.text_only = partition.text_only;
  p.multimodal = partition.multimodal;
  p.samples_per_client = samples_per_client;
  p.public_size = public_size;
  p.val_size = val_size;
  p.test_size = test_size;
  p.heterogeneous = heterogeneous;
  p.strip_modalities = !(mode == RunMode::CentralUpper || mode == RunMode::MFedAvgPNoMissing);
  return p;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t, std::less<>> seen;
  std::size_t line_no = 0;
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (field == nullptr) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(it->second) + ")");
    }
    seen.emplace(key, line_no);
    field->set(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

std::string serialize(const ExperimentConfig& cfg, bool results_only) {
  std::string out;
  for (const auto& f : fields()) {
    if (results_only && !f.affects_results) continue;
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) { return serialize(cfg, false); }

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : serialize(cfg, true)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace carmfl

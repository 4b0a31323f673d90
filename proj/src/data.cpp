// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "carmfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "carmfl/errors.hpp"

namespace carmfl {

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::ImageOnly: return "image-only";
    case Regime::TextOnly: return "text-only";
    case Regime::Multimodal: return "multimodal";
  }
  return "unknown";
}

Regime parse_regime(std::string_view s) {
  if (s == "image-only") return Regime::ImageOnly;
  if (s == "text-only") return Regime::TextOnly;
  if (s == "multimodal") return Regime::Multimodal;
  throw ConfigError("unknown regime '" + std::string(s) + "'");
}

void Dataset::validate(std::size_t num_labels) const {
  for (const auto& s : samples) {
    const std::string where = "sample " + std::to_string(s.id);
    if (!s.img && !s.txt) throw InvariantError(where + ": no modality present");
    if (s.labels.size() != num_labels) throw InvariantError(where + ": label length mismatch");
    if (regime == Regime::ImageOnly && s.txt) throw InvariantError(where + ": text in image-only dataset");
    if (regime == Regime::TextOnly && s.img) throw InvariantError(where + ": image in text-only dataset");
    if (regime == Regime::Multimodal && !(s.img && s.txt)) {
      throw InvariantError(where + ": missing modality in multimodal dataset");
    }
  }
}

void GeneratorSpec::validate() const {
  if (priors.size() != num_labels) throw ConfigError("generator: priors length != num_labels");
  for (double p : priors) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("generator: priors must lie in (0, 1)");
  }
  if (img_signal.size() != num_labels || txt_signal.size() != num_labels) {
    throw ConfigError("generator: one signal vector per label required");
  }
  for (const auto& v : img_signal) {
    if (v.size() != img_dim || !all_finite(v)) throw ConfigError("generator: bad image signal");
  }
  for (const auto& v : txt_signal) {
    if (v.size() != txt_dim || !all_finite(v)) throw ConfigError("generator: bad text signal");
  }
  if (img_offset.size() != img_dim || txt_offset.size() != txt_dim) {
    throw ConfigError("generator: offset length mismatch");
  }
  if (!(img_noise >= 0.0) || !(txt_noise >= 0.0)) throw ConfigError("generator: negative noise");
}

namespace {

Vector expected_mean(const std::vector<double>& priors, const std::vector<Vector>& signals,
                     const Vector& offset) {
  Vector mean = offset;
  for (std::size_t l = 0; l < priors.size(); ++l) {
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += priors[l] * signals[l][j];
  }
  return mean;
}

Vector random_direction(std::size_t dim, double norm, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(dim);
  for (double& x : v) x = g(rng);
  const double n = l2_norm(v);
  if (n > 0.0) {
    for (double& x : v) x *= norm / n;
  }
  return v;
}

}  // namespace

Vector GeneratorSpec::expected_img_mean() const { return expected_mean(priors, img_signal, img_offset); }
Vector GeneratorSpec::expected_txt_mean() const { return expected_mean(priors, txt_signal, txt_offset); }

std::vector<double> default_priors(std::size_t num_labels) {
  if (num_labels == 14) {
    return {0.35, 0.30, 0.25, 0.22, 0.20, 0.18, 0.15, 0.12, 0.10, 0.08, 0.06, 0.05, 0.015, 0.015};
  }
  std::vector<double> p(num_labels, 0.2);
  const std::size_t common = num_labels >= 4 ? num_labels - 2 : num_labels;
  for (std::size_t i = 0; i < common; ++i) {
    p[i] = common == 1 ? 0.3 : 0.35 - 0.30 * static_cast<double>(i) / static_cast<double>(common - 1);
  }
  for (std::size_t i = common; i < num_labels; ++i) p[i] = 0.015;
  return p;
}

std::vector<std::size_t> rare_label_indices(const std::vector<double>& priors) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    if (priors[i] < 0.02) out.push_back(i);
  }
  return out;
}

GeneratorSpec make_generator(std::size_t num_labels, std::size_t img_dim, std::size_t txt_dim,
                             std::vector<double> priors, const SignalConfig& signal,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GeneratorSpec spec;
  spec.num_labels = num_labels;
  spec.img_dim = img_dim;
  spec.txt_dim = txt_dim;
  spec.priors = std::move(priors);
  for (std::size_t l = 0; l < num_labels; ++l) {
    spec.img_signal.push_back(random_direction(img_dim, signal.img_signal_norm, rng));
    spec.txt_signal.push_back(random_direction(txt_dim, signal.txt_signal_norm, rng));
  }
  spec.img_noise = signal.img_noise;
  spec.txt_noise = signal.txt_noise;
  spec.img_offset.assign(img_dim, 0.0);
  spec.txt_offset.assign(txt_dim, 0.0);
  spec.validate();
  return spec;
}

GeneratorSpec shifted(const GeneratorSpec& base, const ShiftConfig& shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GeneratorSpec s = base;
  const Vector di = random_direction(base.img_dim, shift.feature_shift, rng);
  const Vector dt = random_direction(base.txt_dim, shift.feature_shift, rng);
  for (std::size_t j = 0; j < s.img_dim; ++j) s.img_offset[j] += di[j];
  for (std::size_t j = 0; j < s.txt_dim; ++j) s.txt_offset[j] += dt[j];
  for (double& p : s.priors) p = std::clamp(p * shift.prior_scale, 1e-3, 1.0 - 1e-3);
  s.validate();
  return s;
}

Dataset generate(const GeneratorSpec& spec, std::size_t n, std::uint64_t seed, SampleId first_id) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset ds;
  ds.regime = Regime::Multimodal;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = first_id + static_cast<SampleId>(i);
    s.labels.resize(spec.num_labels);
    for (std::size_t l = 0; l < spec.num_labels; ++l) s.labels[l] = u(rng) < spec.priors[l] ? 1 : 0;
    Vector img = spec.img_offset;
    Vector txt = spec.txt_offset;
    for (std::size_t l = 0; l < spec.num_labels; ++l) {
      if (!s.labels[l]) continue;
      for (std::size_t j = 0; j < img.size(); ++j) img[j] += spec.img_signal[l][j];
      for (std::size_t j = 0; j < txt.size(); ++j) txt[j] += spec.txt_signal[l][j];
    }
    for (double& x : img) x += spec.img_noise * g(rng);
    for (double& x : txt) x += spec.txt_noise * g(rng);
    s.img = std::move(img);
    s.txt = std::move(txt);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset strip_to(Dataset ds, Regime regime) {
  ds.regime = regime;
  for (auto& s : ds.samples) {
    if (regime == Regime::ImageOnly) {
      if (!s.img) throw InvariantError("strip_to: sample " + std::to_string(s.id) + " has no image");
      s.txt.reset();
    } else if (regime == Regime::TextOnly) {
      if (!s.txt) throw InvariantError("strip_to: sample " + std::to_string(s.id) + " has no text");
      s.img.reset();
    }
  }
  return ds;
}

void PartitionConfig::validate() const {
  if (num_clients() == 0) throw ConfigError("partition: I + T + M must be at least 1");
}

std::size_t shifted_samples_needed(const PartitionConfig& cfg) {
  return cfg.heterogeneous ? (cfg.image_only + cfg.text_only) * cfg.samples_per_client : 0;
}

std::size_t base_samples_needed(const PartitionConfig& cfg) {
  const std::size_t from_base = cfg.heterogeneous ? cfg.multimodal : cfg.num_clients();
  return cfg.test_size + cfg.val_size + cfg.public_size + from_base * cfg.samples_per_client;
}

namespace {

Dataset take(const Dataset& src, std::size_t& pos, std::size_t n) {
  Dataset out;
  out.regime = src.regime;
  out.samples.assign(src.samples.begin() + static_cast<std::ptrdiff_t>(pos),
                     src.samples.begin() + static_cast<std::ptrdiff_t>(pos + n));
  pos += n;
  return out;
}

std::vector<std::size_t> client_sizes(std::size_t available, std::size_t clients, std::size_t per_client) {
  std::vector<std::size_t> sizes(clients, per_client);
  if (per_client == 0 && clients > 0) {
    for (std::size_t c = 0; c < clients; ++c) {
      sizes[c] = available / clients + (c < available % clients ? 1 : 0);
    }
  }
  return sizes;
}

}  // namespace

Partition partition(const Dataset& base, const PartitionConfig& cfg, const Dataset* shifted) {
  cfg.validate();
  if (base.regime != Regime::Multimodal) throw InvariantError("partition: source must be multimodal");
  const bool hetero = cfg.heterogeneous && cfg.image_only + cfg.text_only > 0;
  if (hetero && shifted == nullptr) throw ConfigError("partition: heterogeneous mode needs shifted data");

  const std::size_t held_out = cfg.test_size + cfg.val_size + cfg.public_size;
  if (base.size() < held_out) {
    throw ConfigError("partition: insufficient data: need " + std::to_string(held_out) +
                      " held-out samples, have " + std::to_string(base.size()));
  }
  const std::size_t unimodal = cfg.image_only + cfg.text_only;
  const std::size_t base_clients = hetero ? cfg.multimodal : cfg.num_clients();
  const auto base_sizes = client_sizes(base.size() - held_out, base_clients, cfg.samples_per_client);
  const auto shift_sizes =
      hetero ? client_sizes(shifted->size(), unimodal, cfg.samples_per_client) : std::vector<std::size_t>{};

  std::size_t base_need = held_out;
  for (auto n : base_sizes) base_need += n;
  std::size_t shift_need = 0;
  for (auto n : shift_sizes) shift_need += n;
  if (base.size() < base_need || (hetero && shifted->size() < shift_need)) {
    throw ConfigError("partition: insufficient data for the requested clients");
  }
  for (auto n : base_sizes) {
    if (n == 0) throw ConfigError("partition: insufficient data, a client would be empty");
  }
  for (auto n : shift_sizes) {
    if (n == 0) throw ConfigError("partition: insufficient data, a client would be empty");
  }

  Partition p;
  std::size_t pos = 0;
  std::size_t shift_pos = 0;
  p.test = take(base, pos, cfg.test_size);
  p.validation = take(base, pos, cfg.val_size);

  std::size_t next_base = 0;
  std::size_t next_shift = 0;
  for (std::size_t c = 0; c < cfg.num_clients(); ++c) {
    Regime regime = Regime::Multimodal;
    if (c < cfg.image_only) {
      regime = Regime::ImageOnly;
    } else if (c < unimodal) {
      regime = Regime::TextOnly;
    }
    Dataset client = (hetero && c < unimodal) ? take(*shifted, shift_pos, shift_sizes[next_shift++])
                                              : take(base, pos, base_sizes[next_base++]);
    p.clients.push_back(cfg.strip_modalities ? strip_to(std::move(client), regime) : std::move(client));
  }
  p.public_pool = take(base, pos, cfg.public_size);
  return p;
}

namespace {

using nlohmann::json;

std::size_t dim_of(const Dataset& ds, bool image) {
  for (const auto& s : ds.samples) {
    const auto& v = image ? s.img : s.txt;
    if (v) return v->size();
  }
  return 0;
}

json feature_json(const std::optional<Vector>& v) { return v ? json(*v) : json(nullptr); }

std::optional<Vector> parse_feature(const json& j, std::size_t line, const char* key,
                                    std::optional<std::size_t>& dim) {
  if (!j.contains(key)) throw ParseError(line, std::string("missing field '") + key + "'");
  const json& f = j.at(key);
  if (f.is_null()) return std::nullopt;
  if (!f.is_array()) throw ParseError(line, std::string("'") + key + "' must be an array or null");
  Vector v;
  v.reserve(f.size());
  for (const auto& x : f) {
    if (!x.is_number()) throw ParseError(line, std::string("'") + key + "' has a non-numeric entry");
    v.push_back(x.get<double>());
  }
  if (dim && *dim != 0 && *dim != v.size()) {
    throw ParseError(line, std::string("'") + key + "' length " + std::to_string(v.size()) +
                               " != header " + std::to_string(*dim));
  }
  if (!dim || *dim == 0) dim = v.size();
  return v;
}

}  // namespace

std::string to_jsonl(const Dataset& ds) {
  const std::size_t num_labels = ds.empty() ? 0 : ds.samples.front().labels.size();
  std::ostringstream out;
  json header = {{"header",
                  {{"num_labels", num_labels},
                   {"img_dim", dim_of(ds, true)},
                   {"txt_dim", dim_of(ds, false)},
                   {"regime", std::string(to_string(ds.regime))}}}};
  out << header.dump() << '\n';
  for (const auto& s : ds.samples) {
    std::vector<int> labels(s.labels.begin(), s.labels.end());
    json row = {{"id", s.id}, {"img", feature_json(s.img)}, {"txt", feature_json(s.txt)}, {"labels", labels}};
    out << row.dump() << '\n';
  }
  return out.str();
}

Dataset parse_jsonl(std::string_view text) {
  Dataset ds;
  std::optional<std::size_t> num_labels, img_dim, txt_dim;
  std::optional<Regime> regime;
  bool any_img = false, any_txt = false;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
    try {
      if (j.contains("header")) {
        if (line_no != 1 || !ds.samples.empty()) throw ParseError(line_no, "header must be the first line");
        const json& h = j.at("header");
        num_labels = h.at("num_labels").get<std::size_t>();
        img_dim = h.value("img_dim", std::size_t{0});
        txt_dim = h.value("txt_dim", std::size_t{0});
        if (h.contains("regime")) regime = parse_regime(h.at("regime").get<std::string>());
        continue;
      }
      Sample s;
      if (!j.contains("id") || !j.at("id").is_number_integer()) throw ParseError(line_no, "missing integer 'id'");
      s.id = j.at("id").get<SampleId>();
      s.img = parse_feature(j, line_no, "img", img_dim);
      s.txt = parse_feature(j, line_no, "txt", txt_dim);
      if (!s.img && !s.txt) throw ParseError(line_no, "both 'img' and 'txt' are null");
      if (!j.contains("labels") || !j.at("labels").is_array()) throw ParseError(line_no, "missing 'labels' array");
      for (const auto& x : j.at("labels")) {
        if (!x.is_number_integer() || (x.get<int>() != 0 && x.get<int>() != 1)) {
          throw ParseError(line_no, "labels must be 0/1");
        }
        s.labels.push_back(static_cast<std::uint8_t>(x.get<int>()));
      }
      if (!num_labels) num_labels = s.labels.size();
      if (s.labels.size() != *num_labels) {
        throw ParseError(line_no, "labels length " + std::to_string(s.labels.size()) + " != header " +
                                      std::to_string(*num_labels));
      }
      any_img |= s.img.has_value();
      any_txt |= s.txt.has_value();
      ds.samples.push_back(std::move(s));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }

  if (regime) {
    ds.regime = *regime;
  } else if (any_img && !any_txt) {
    ds.regime = Regime::ImageOnly;
  } else if (any_txt && !any_img) {
    ds.regime = Regime::TextOnly;
  } else {
    ds.regime = Regime::Multimodal;
  }
  try {
    ds.validate(num_labels.value_or(0));
  } catch (const InvariantError& e) {
    throw ParseError(line_no, e.what());
  }
  return ds;
}

void save_jsonl(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << to_jsonl(ds);
}

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str());
}

}  // namespace carmfl

// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "carmfl/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "carmfl/errors.hpp"

namespace carmfl {

std::size_t EncoderParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

std::size_t EncoderParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void EncoderParams::validate() const {
  if (layers.empty()) throw ShapeError("encoder has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].bias.size() != layers[i].weight.rows()) {
      throw ShapeError("encoder layer " + std::to_string(i) + ": bias length mismatch");
    }
    if (i > 0 && layers[i].weight.cols() != layers[i - 1].weight.rows()) {
      throw ShapeError("encoder layer " + std::to_string(i) + ": input " +
                       std::to_string(layers[i].weight.cols()) + " does not chain with output " +
                       std::to_string(layers[i - 1].weight.rows()));
    }
  }
}

ModelLayout Model::layout() const {
  ModelLayout l;
  l.image = {0, image.parameter_count()};
  l.text = {l.image.offset + l.image.size, text.parameter_count()};
  l.classifier = {l.text.offset + l.text.size, classifier.parameter_count()};
  l.total = l.classifier.offset + l.classifier.size;
  return l;
}

namespace {

template <typename Fn>
void for_each_buffer(const Model& m, Fn&& fn) {
  for (const auto* enc : {&m.image, &m.text}) {
    for (const auto& layer : enc->layers) {
      fn(layer.weight.data());
      fn(std::span<const double>(layer.bias));
    }
  }
  fn(m.classifier.weight.data());
  fn(std::span<const double>(m.classifier.bias));
}

template <typename Fn>
void for_each_buffer(Model& m, Fn&& fn) {
  for (auto* enc : {&m.image, &m.text}) {
    for (auto& layer : enc->layers) {
      fn(layer.weight.data());
      fn(std::span<double>(layer.bias));
    }
  }
  fn(m.classifier.weight.data());
  fn(std::span<double>(m.classifier.bias));
}

}  // namespace

Vector Model::flatten() const {
  Vector flat;
  flat.reserve(parameter_count());
  for_each_buffer(*this, [&](std::span<const double> s) { flat.insert(flat.end(), s.begin(), s.end()); });
  return flat;
}

void Model::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(parameter_count()) +
                     " parameters, got " + std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for_each_buffer(*this, [&](std::span<double> s) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), s.size(), s.begin());
    pos += s.size();
  });
}

void Model::validate() const {
  image.validate();
  text.validate();
  if (image.output_dim() != text.output_dim()) throw ShapeError("encoder output dims differ");
  if (classifier.weight.cols() != 2 * image.output_dim()) {
    throw ShapeError("classifier must have 2d columns");
  }
  if (classifier.bias.size() != classifier.weight.rows()) {
    throw ShapeError("classifier bias length mismatch");
  }
}

namespace {

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng) {
  DenseLayer layer{Matrix(out, in), Vector(out, 0.0), act};
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : layer.weight.data()) w = dist(rng);
  return layer;
}

EncoderParams make_encoder(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  EncoderParams enc;
  enc.layers.push_back(make_layer(in, hidden, Activation::Relu, rng));
  enc.layers.push_back(make_layer(hidden, out, Activation::Identity, rng));
  return enc;
}

}  // namespace

Model make_model(const ModelShape& shape, std::mt19937_64& rng) {
  Model m;
  m.image = make_encoder(shape.img_dim, shape.hidden_dim, shape.feature_dim, rng);
  m.text = make_encoder(shape.txt_dim, shape.hidden_dim, shape.feature_dim, rng);
  DenseLayer head = make_layer(2 * shape.feature_dim, shape.num_labels, Activation::Identity, rng);
  m.classifier.weight = std::move(head.weight);
  m.classifier.bias = std::move(head.bias);
  return m;
}

std::vector<double> layer_forward(const DenseLayer& layer, std::span<const double> x) {
  Vector z = matvec(layer.weight, x);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] += layer.bias[i];
    if (layer.activation == Activation::Relu && z[i] < 0.0) z[i] = 0.0;
  }
  return z;
}

Vector encode(const EncoderParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw ShapeError("encode: encoder has no layers");
  Vector h(x.begin(), x.end());
  for (const auto& layer : params.layers) h = layer_forward(layer, h);
  return l2_normalize(h);
}

namespace {

Vector fused_features(const Model& model, const std::optional<Vector>& img,
                      const std::optional<Vector>& txt) {
  const std::size_t d = model.classifier.feature_dim();
  Vector fused(2 * d, 0.0);
  if (img) {
    Vector f = encode(model.image, *img);
    if (f.size() != d) throw ShapeError("image encoder output does not match classifier");
    std::copy(f.begin(), f.end(), fused.begin());
  }
  if (txt) {
    Vector f = encode(model.text, *txt);
    if (f.size() != d) throw ShapeError("text encoder output does not match classifier");
    std::copy(f.begin(), f.end(), fused.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return fused;
}

}  // namespace

Vector forward(const Model& model, const std::optional<Vector>& img,
               const std::optional<Vector>& txt) {
  if (!img && !txt) throw ShapeError("forward: both modalities absent");
  Vector logits = matvec(model.classifier.weight, fused_features(model, img, txt));
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += model.classifier.bias[i];
  return logits;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double bce_loss(std::span<const double> logits, const MultiHot& labels) {
  if (logits.size() != labels.size()) {
    throw ShapeError("bce_loss: " + std::to_string(logits.size()) + " logits vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (logits.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    // -[y log s(z) + (1-y) log(1-s(z))] == softplus(z) - y z
    total += softplus(logits[i]) - (labels[i] ? logits[i] : 0.0);
  }
  return total / static_cast<double>(logits.size());
}

double batch_loss(const Model& model, std::span<const Sample* const> batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const Sample* s : batch) total += bce_loss(forward(model, s->img, s->txt), s->labels);
  return total / static_cast<double>(batch.size());
}

namespace {

struct EncoderTrace {
  std::vector<Vector> inputs;  // input to each layer
  std::vector<Vector> pre;     // pre-activation of each layer
  Vector output;               // normalized feature
  double norm = 0.0;
};

EncoderTrace trace_encoder(const EncoderParams& enc, std::span<const double> x) {
  EncoderTrace t;
  Vector h(x.begin(), x.end());
  for (const auto& layer : enc.layers) {
    Vector z = matvec(layer.weight, h);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
    Vector a = z;
    if (layer.activation == Activation::Relu) {
      for (double& v : a) v = std::max(v, 0.0);
    }
    t.inputs.push_back(std::move(h));
    t.pre.push_back(std::move(z));
    h = std::move(a);
  }
  t.norm = l2_norm(h);
  t.output = l2_normalize(h);
  return t;
}

// Accumulates d(loss)/d(encoder params) into `grad`, given d(loss)/d(output).
void backprop_encoder(const EncoderParams& enc, const EncoderTrace& t, std::span<const double> g_out,
                      std::span<double> grad) {
  if (t.norm == 0.0) return;
  const double yg = dot(t.output, g_out);
  Vector delta(g_out.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = (g_out[i] - t.output[i] * yg) / t.norm;

  // Offsets of each layer's weight block inside the encoder block.
  std::vector<std::size_t> offsets(enc.layers.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    offsets[i] = pos;
    pos += enc.layers[i].weight.size() + enc.layers[i].bias.size();
  }

  for (std::size_t li = enc.layers.size(); li-- > 0;) {
    const DenseLayer& layer = enc.layers[li];
    if (layer.activation == Activation::Relu) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (t.pre[li][i] <= 0.0) delta[i] = 0.0;
      }
    }
    const Vector& in = t.inputs[li];
    double* gw = grad.data() + offsets[li];
    double* gb = gw + layer.weight.size();
    const std::size_t cols = layer.weight.cols();
    for (std::size_t r = 0; r < delta.size(); ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      double* row = gw + r * cols;
      for (std::size_t c = 0; c < cols; ++c) row[c] += dr * in[c];
      gb[r] += dr;
    }
    if (li > 0) delta = matvec_transposed(layer.weight, delta);
  }
}

void accumulate_sample(const Model& model, const ModelLayout& layout, const Sample& s, double scale,
                       std::span<double> grad) {
  if (!s.img && !s.txt) throw ShapeError("backward: sample " + std::to_string(s.id) + " has no modality");
  const std::size_t d = model.classifier.feature_dim();
  const std::size_t num_labels = model.classifier.num_labels();
  if (s.labels.size() != num_labels) throw ShapeError("backward: label length mismatch");

  std::optional<EncoderTrace> ti, tt;
  Vector fused(2 * d, 0.0);
  if (s.img) {
    ti = trace_encoder(model.image, *s.img);
    std::copy(ti->output.begin(), ti->output.end(), fused.begin());
  }
  if (s.txt) {
    tt = trace_encoder(model.text, *s.txt);
    std::copy(tt->output.begin(), tt->output.end(), fused.begin() + static_cast<std::ptrdiff_t>(d));
  }

  const Matrix& w = model.classifier.weight;
  Vector dlogits(num_labels);
  for (std::size_t j = 0; j < num_labels; ++j) {
    const double z = dot(w.row(j), fused) + model.classifier.bias[j];
    dlogits[j] = scale * (sigmoid(z) - (s.labels[j] ? 1.0 : 0.0)) / static_cast<double>(num_labels);
  }

  double* gw = grad.data() + layout.classifier.offset;
  double* gb = gw + w.size();
  for (std::size_t j = 0; j < num_labels; ++j) {
    double* row = gw + j * w.cols();
    for (std::size_t c = 0; c < w.cols(); ++c) row[c] += dlogits[j] * fused[c];
    gb[j] += dlogits[j];
  }

  const Vector dfused = matvec_transposed(w, dlogits);
  std::span<const double> dimg(dfused.data(), d);
  std::span<const double> dtxt(dfused.data() + d, d);
  if (ti) backprop_encoder(model.image, *ti, dimg, grad.subspan(layout.image.offset, layout.image.size));
  if (tt) backprop_encoder(model.text, *tt, dtxt, grad.subspan(layout.text.offset, layout.text.size));
}

}  // namespace

Vector backward(const Model& model, std::span<const Sample* const> batch) {
  const ModelLayout layout = model.layout();
  Vector grad(layout.total, 0.0);
  if (batch.empty()) return grad;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Sample* s : batch) accumulate_sample(model, layout, *s, scale, grad);
  return grad;
}

Vector backward(const Model& model, std::span<const Sample> batch) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return backward(model, std::span<const Sample* const>(ptrs));
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state) {
  if (params.size() != grad.size() || params.size() != state.m.size() ||
      state.m.size() != state.v.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment lengths differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

namespace {

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

}  // namespace

void write_parameters(std::ostream& out, std::span<const double> flat) {
  const std::uint64_t n = to_little_endian(static_cast<std::uint64_t>(flat.size()));
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (double v : flat) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw std::runtime_error("write_parameters: stream failure");
}

Vector read_parameters(std::istream& in) {
  std::uint64_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n)) throw ShapeError("read_parameters: missing header");
  n = to_little_endian(n);
  Vector flat;
  flat.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
      throw ShapeError("read_parameters: truncated payload");
    }
    flat.push_back(std::bit_cast<double>(to_little_endian(bits)));
  }
  return flat;
}

void save_parameters(const std::string& path, std::span<const double> flat) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  write_parameters(out, flat);
}

Vector load_parameters(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_parameters(in);
}

}  // namespace carmfl

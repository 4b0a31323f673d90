// Copyright 2026 The carmfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "carmfl/sample.hpp"
#include "carmfl/tensor.hpp"

namespace carmfl {

enum class Activation { Identity, Relu };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Identity;

  bool operator==(const DenseLayer&) const = default;
};

/// Modality encoder: a stack of dense layers followed by L2 normalization.
struct EncoderParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  /// Throws ShapeError unless consecutive layers chain.
  void validate() const;

  bool operator==(const EncoderParams&) const = default;
};

/// Linear head over the fused feature [image | text]. Columns [0, d) read the
/// image feature, columns [d, 2d) read the text feature.
struct ClassifierParams {
  Matrix weight;  // num_labels x 2d
  Vector bias;    // num_labels

  std::size_t feature_dim() const { return weight.cols() / 2; }
  std::size_t num_labels() const { return weight.rows(); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  bool operator==(const ClassifierParams&) const = default;
};

struct ParameterBlock {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Location of each component inside the flat parameter vector.
struct ModelLayout {
  ParameterBlock image;
  ParameterBlock text;
  ParameterBlock classifier;
  std::size_t total = 0;
};

struct ModelShape {
  std::size_t img_dim = 32;
  std::size_t txt_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t feature_dim = 32;
  std::size_t num_labels = 14;
};

/// The full multimodal model {image encoder, text encoder, classifier}.
///
/// Flat order: image encoder layers, text encoder layers, classifier; each
/// dense layer contributes its row-major weight followed by its bias.
struct Model {
  EncoderParams image;
  EncoderParams text;
  ClassifierParams classifier;

  ModelLayout layout() const;
  std::size_t parameter_count() const { return layout().total; }

  Vector flatten() const;
  /// Overwrites every parameter from `flat`; throws ShapeError on length mismatch.
  void unflatten(std::span<const double> flat);
  void validate() const;

  bool operator==(const Model&) const = default;
};

/// Two-layer ReLU MLP encoders and a zero-bias linear head, weights drawn
/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Model make_model(const ModelShape& shape, std::mt19937_64& rng);

std::vector<double> layer_forward(const DenseLayer& layer, std::span<const double> x);

/// Runs the encoder and L2-normalizes the output (zero stays zero).
Vector encode(const EncoderParams& params, std::span<const double> x);

/// Per-label logits. An absent modality skips its encoder and contributes the
/// zero feature vector.
Vector forward(const Model& model, const std::optional<Vector>& img,
               const std::optional<Vector>& txt);

/// Mean over labels of the sigmoid binary cross-entropy.
double bce_loss(std::span<const double> logits, const MultiHot& labels);

double sigmoid(double z);
double softplus(double z);

/// Mean batch loss, for finite-difference checks and diagnostics.
double batch_loss(const Model& model, std::span<const Sample* const> batch);

/// Gradient of the mean batch loss with respect to Model::flatten().
Vector backward(const Model& model, std::span<const Sample* const> batch);
Vector backward(const Model& model, std::span<const Sample> batch);

struct AdamState {
  AdamState(std::size_t n, double learning_rate = 1e-4)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

  Vector m;
  Vector v;
  std::uint64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state);

/// Checkpoint format: u64 little-endian element count, then that many
/// little-endian IEEE-754 doubles.
void write_parameters(std::ostream& out, std::span<const double> flat);
Vector read_parameters(std::istream& in);
void save_parameters(const std::string& path, std::span<const double> flat);
Vector load_parameters(const std::string& path);

}  // namespace carmfl

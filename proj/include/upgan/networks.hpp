// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "upgan/ggd.hpp"
#include "upgan/image.hpp"
#include "upgan/nn/module.hpp"

namespace upgan {

/// Encoder–decoder with skip connections and a three-way GGD head.
///
/// Each level runs two 3x3 convolutions followed by 2x2 max pooling; the
/// decoder mirrors it with nearest-neighbour upsampling, a 3x3 convolution,
/// concatenation with the matching skip and two more 3x3 convolutions. No
/// normalization layers. Widths double per level starting at `base_width`.
struct GeneratorConfig {
  int in_channels = 1;
  /// When > 0 the generator accepts this many channels and mixes them into
  /// `in_channels` with a learned 1x1 convolution first.
  int fusion_inputs = 0;
  int base_width = 32;
  int depth = 4;
  ggd::BetaClamp beta_clamp{};
  double alpha_floor = ggd::kAlphaFloor;
  float leaky_slope = 0.2f;

  void validate() const;
};

/// PatchGAN-style critic: `layers` stride-2 4x4 convolutions with leaky ReLU,
/// then a stride-1 3x3 convolution down to one channel. The score map is
/// left unsquashed (least-squares objective).
struct DiscriminatorConfig {
  int in_channels = 1;
  int layers = 3;
  int base_width = 64;
  float leaky_slope = 0.2f;

  void validate() const;
  /// Side of the input window seen by one output cell.
  int receptive_field() const;
  /// Pixel offset between neighbouring output cells.
  int stride() const { return 1 << layers; }
  int output_size(int input_size) const;
};

/// Graph-level head outputs, each N×1×H×W.
struct GgdHeads {
  nn::Var mean;
  nn::Var alpha;
  nn::Var beta;
};

class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  /// Head activations: mean = tanh, alpha = floor + softplus,
  /// beta = min + (max − min)·sigmoid, so outputs always satisfy the
  /// GgdPrediction invariants.
  GgdHeads forward(const nn::Var& input) const;

  const GeneratorConfig& config() const { return cfg_; }
  int input_channels() const { return cfg_.fusion_inputs > 0 ? cfg_.fusion_inputs : cfg_.in_channels; }
  nn::ParameterList& params() { return params_; }
  const nn::ParameterList& params() const { return params_; }

 private:
  struct Level {
    nn::Conv2d first;
    nn::Conv2d second;
  };
  struct UpLevel {
    nn::Conv2d up;
    nn::Conv2d first;
    nn::Conv2d second;
  };

  GeneratorConfig cfg_;
  nn::ParameterList params_;
  nn::Conv2d fusion_;
  std::vector<Level> encoder_;
  Level bottleneck_;
  std::vector<UpLevel> decoder_;  // deepest first
  nn::Conv2d head_;
};

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  nn::Var forward(const nn::Var& input) const;

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParameterList& params() { return params_; }
  const nn::ParameterList& params() const { return params_; }

 private:
  DiscriminatorConfig cfg_;
  nn::ParameterList params_;
  std::vector<nn::Conv2d> body_;
  nn::Conv2d out_;
};

// Image-level helpers

/// Packs single-channel images into a 1×C×H×W tensor.
nn::Tensor stack_channels(const std::vector<Image>& channels);
/// Extracts (sample, channel) from a tensor.
Image channel_image(const nn::Tensor& t, int sample, int channel);
ggd::GgdPrediction to_prediction(const GgdHeads& heads, int sample);

/// Inference-only forward of one C×H×W stack.
ggd::GgdPrediction generator_forward(const Generator& g, const std::vector<Image>& input);
Image discriminator_forward(const Discriminator& d, const std::vector<Image>& input);

}  // namespace upgan

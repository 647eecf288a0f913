// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "upgan/ggd.hpp"
#include "upgan/networks.hpp"

namespace upgan {

/// How phase m > 0 sees the output of phase m − 1.
enum class Guidance {
  /// f = b̂ ⊙ σ / Σσ, stacked as (f, a).
  uncertainty,
  /// Ablation: (b̂, a) with no uncertainty weighting.
  none,
};

struct CascadeConfig {
  int phases = 3;
  /// Template for every phase; in_channels is overwritten per phase.
  GeneratorConfig generator{};
  DiscriminatorConfig discriminator{};
  Guidance guidance = Guidance::uncertainty;
  /// Replace the closed-form product with a learned 1x1 fusion of
  /// (b̂, normalized σ, a). Only meaningful with uncertainty guidance.
  bool learned_fusion = false;
  /// Multiplier applied to the attention feature before it enters the next
  /// generator. 0 selects a per-image Σσ/max σ, so the weighting of b̂ peaks
  /// at 1; a learned σ map spans orders of magnitude and a fixed gain such as
  /// K leaves a few pixels large enough to saturate the next generator.
  double feature_gain = 0.0;
  /// Critics see (image, a) instead of the image alone.
  bool conditional_discriminator = false;

  void validate() const;
};

/// One phase of a forward pass, image-level.
struct PhaseOutput {
  ggd::GgdPrediction prediction;
  Image sigma;
  /// σ / Σσ over all pixels; sums to one.
  Image attention;
  /// Input feature handed to the next phase; empty for the last phase.
  Image feature;
};

struct CascadeState {
  Image source;
  std::vector<PhaseOutput> phases;
};

/// M generator/discriminator pairs. Phase 0 consumes the source image;
/// phase m > 0 consumes a two-channel stack built from phase m − 1.
class Cascade {
 public:
  Cascade() = default;
  Cascade(const CascadeConfig& cfg, std::uint64_t seed);

  const CascadeConfig& config() const { return cfg_; }
  int phases() const { return static_cast<int>(generators_.size()); }

  Generator& generator(int m) { return generators_.at(m); }
  const Generator& generator(int m) const { return generators_.at(m); }
  Discriminator& discriminator(int m) { return discriminators_.at(m); }
  const Discriminator& discriminator(int m) const { return discriminators_.at(m); }

  /// Graph forward through phases [0, count). `source` is N×1×H×W.
  std::vector<GgdHeads> forward(const nn::Var& source, int count = -1) const;

  /// Builds the input of phase m (m >= 1) from the previous heads.
  nn::Var phase_input(const GgdHeads& previous, const nn::Var& source) const;

  /// What D_m scores for an image: the image, or (image, a) when conditional.
  nn::Var critic_input(const nn::Var& image, const nn::Var& source) const;

 private:
  CascadeConfig cfg_;
  std::vector<Generator> generators_;
  std::vector<Discriminator> discriminators_;
};

/// σ / Σσ. Throws std::domain_error if Σσ < 1e-12.
Image attention_map(const Image& sigma);

/// b̂ ⊙ σ / Σσ with σ derived from (α, β).
Image attention_feature(const ggd::GgdPrediction& previous);

/// Channel order (f, a).
std::vector<Image> cascade_input(const Image& feature, const Image& source);

/// Full inference pass on one image, retaining every phase.
CascadeState upgan_forward(const Image& source, const Cascade& model);

}  // namespace upgan

// SPDX-License-Identifier: Apache-2.0
#include "upgan/cascade.hpp"

#include <algorithm>
#include <stdexcept>

namespace upgan {

namespace {

constexpr double kSigmaSumFloor = 1e-12;

// Per-image Σσ / max σ, broadcast to the map shape. Multiplying the attention by
// it puts the attention peak at 1 (uniform σ gives K). Held constant under autograd.
nn::Var peak_gain(const nn::Tensor& sigma) {
  const nn::Shape s = sigma.shape;
  nn::Tensor gain(s);
  const std::size_t plane = s.plane() * static_cast<std::size_t>(s.c);
  for (int n = 0; n < s.n; ++n) {
    const float* v = sigma.data.data() + n * plane;
    double total = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      total += v[i];
      peak = std::max(peak, static_cast<double>(v[i]));
    }
    const float g = peak > 0.0 ? static_cast<float>(std::max(total, kSigmaSumFloor) / peak) : 0.0f;
    std::fill(gain.data.begin() + n * plane, gain.data.begin() + (n + 1) * plane, g);
  }
  return nn::constant(std::move(gain));
}

}  // namespace

void CascadeConfig::validate() const {
  if (phases < 1) throw std::invalid_argument("CascadeConfig: phases must be >= 1");
  if (feature_gain < 0.0) throw std::invalid_argument("CascadeConfig: feature_gain must be >= 0");
  if (learned_fusion && guidance != Guidance::uncertainty) {
    throw std::invalid_argument("CascadeConfig: learned_fusion requires uncertainty guidance");
  }
  generator.validate();
  discriminator.validate();
}

Cascade::Cascade(const CascadeConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  for (int m = 0; m < cfg_.phases; ++m) {
    GeneratorConfig g = cfg_.generator;
    g.in_channels = m == 0 ? 1 : 2;
    g.fusion_inputs = (m > 0 && cfg_.learned_fusion) ? 3 : 0;
    const std::uint64_t phase_seed = seed + 7919ull * static_cast<std::uint64_t>(m + 1);
    generators_.emplace_back(g, phase_seed);
    DiscriminatorConfig d = cfg_.discriminator;
    d.in_channels = cfg_.conditional_discriminator ? 2 : 1;
    discriminators_.emplace_back(d, phase_seed ^ 0x9e3779b97f4a7c15ull);
  }
}

nn::Var Cascade::phase_input(const GgdHeads& previous, const nn::Var& source) const {
  if (cfg_.guidance == Guidance::none) return nn::concat_channels({previous.mean, source});
  nn::Var sigma = nn::ggd_sigma(previous.alpha, previous.beta);
  nn::Var attention = nn::normalize_per_sample(sigma, kSigmaSumFloor);
  nn::Var scaled = cfg_.feature_gain > 0.0 ? nn::affine(attention, static_cast<float>(cfg_.feature_gain), 0.0f)
                                           : nn::mul(attention, peak_gain(sigma->value));
  if (cfg_.learned_fusion) return nn::concat_channels({previous.mean, scaled, source});
  return nn::concat_channels({nn::mul(previous.mean, scaled), source});
}

nn::Var Cascade::critic_input(const nn::Var& image, const nn::Var& source) const {
  return cfg_.conditional_discriminator ? nn::concat_channels({image, source}) : image;
}

std::vector<GgdHeads> Cascade::forward(const nn::Var& source, int count) const {
  if (source->value.shape.c != 1) throw std::invalid_argument("Cascade: source must have one channel");
  if (count < 0) count = phases();
  if (count > phases()) throw std::invalid_argument("Cascade: requested more phases than configured");
  std::vector<GgdHeads> out;
  out.reserve(count);
  for (int m = 0; m < count; ++m) {
    nn::Var input = m == 0 ? source : phase_input(out.back(), source);
    out.push_back(generators_[m].forward(input));
  }
  return out;
}

Image attention_map(const Image& sigma) {
  double total = 0.0;
  for (double v : sigma.pixels) total += v;
  if (!(total >= kSigmaSumFloor)) throw std::domain_error("attention_map: degenerate uncertainty (sum of sigma ~ 0)");
  Image out(sigma.height, sigma.width);
  for (std::size_t i = 0; i < sigma.size(); ++i) out.pixels[i] = sigma.pixels[i] / total;
  return out;
}

Image attention_feature(const ggd::GgdPrediction& previous) {
  const Image attention = attention_map(ggd::sigma_map(previous.alpha, previous.beta));
  require_same_shape(previous.mean, attention, "attention_feature");
  Image out(attention.height, attention.width);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = previous.mean.pixels[i] * attention.pixels[i];
  return out;
}

std::vector<Image> cascade_input(const Image& feature, const Image& source) {
  require_same_shape(feature, source, "cascade_input");
  return {feature, source};
}

CascadeState upgan_forward(const Image& source, const Cascade& model) {
  nn::NoGradGuard no_grad;
  const auto heads = model.forward(nn::constant(stack_channels({source})));
  CascadeState state;
  state.source = source;
  for (std::size_t m = 0; m < heads.size(); ++m) {
    PhaseOutput phase;
    phase.prediction = to_prediction(heads[m], 0);
    phase.sigma = ggd::sigma_map(phase.prediction.alpha, phase.prediction.beta);
    phase.attention = attention_map(phase.sigma);
    if (m + 1 < heads.size()) {
      if (model.config().guidance == Guidance::none) {
        phase.feature = phase.prediction.mean;
      } else {
        phase.feature = Image(source.height, source.width);
        for (std::size_t i = 0; i < source.size(); ++i) {
          phase.feature.pixels[i] = phase.prediction.mean.pixels[i] * phase.attention.pixels[i];
        }
      }
    }
    state.phases.push_back(std::move(phase));
  }
  return state;
}

}  // namespace upgan

// SPDX-License-Identifier: Apache-2.0
#include "upgan/networks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace upgan {

namespace {

double leaky_gain(float slope) { return std::sqrt(2.0 / (1.0 + static_cast<double>(slope) * slope)); }

}  // namespace

void GeneratorConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("GeneratorConfig: in_channels must be >= 1");
  if (fusion_inputs < 0) throw std::invalid_argument("GeneratorConfig: fusion_inputs must be >= 0");
  if (base_width < 1) throw std::invalid_argument("GeneratorConfig: base_width must be >= 1");
  if (depth < 1) throw std::invalid_argument("GeneratorConfig: depth must be >= 1");
  if (!(beta_clamp.min > 0.0) || !(beta_clamp.max > beta_clamp.min)) {
    throw std::invalid_argument("GeneratorConfig: beta clamp must satisfy 0 < min < max");
  }
  if (!(alpha_floor > 0.0)) throw std::invalid_argument("GeneratorConfig: alpha_floor must be > 0");
}

void DiscriminatorConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("DiscriminatorConfig: in_channels must be >= 1");
  if (layers < 1) throw std::invalid_argument("DiscriminatorConfig: layers must be >= 1");
  if (base_width < 1) throw std::invalid_argument("DiscriminatorConfig: base_width must be >= 1");
}

int DiscriminatorConfig::receptive_field() const {
  int field = 1;
  int jump = 1;
  for (int i = 0; i < layers; ++i) {
    field += 3 * jump;
    jump *= 2;
  }
  return field + 2 * jump;
}

int DiscriminatorConfig::output_size(int input_size) const {
  int s = input_size;
  for (int i = 0; i < layers; ++i) s = (s + 2 - 4) / 2 + 1;
  return s;
}

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const double gain = leaky_gain(cfg_.leaky_slope);
  auto width = [&](int level) { return cfg_.base_width << level; };

  if (cfg_.fusion_inputs > 0) {
    fusion_ = nn::Conv2d::create(params_, "fusion", cfg_.fusion_inputs, cfg_.in_channels, 1, 1, 0, rng, 1.0);
  }
  int in = cfg_.in_channels;
  for (int l = 0; l < cfg_.depth; ++l) {
    const std::string name = "enc" + std::to_string(l);
    Level level;
    level.first = nn::Conv2d::create(params_, name + ".conv1", in, width(l), 3, 1, 1, rng, gain);
    level.second = nn::Conv2d::create(params_, name + ".conv2", width(l), width(l), 3, 1, 1, rng, gain);
    encoder_.push_back(level);
    in = width(l);
  }
  bottleneck_.first = nn::Conv2d::create(params_, "mid.conv1", in, width(cfg_.depth), 3, 1, 1, rng, gain);
  bottleneck_.second =
      nn::Conv2d::create(params_, "mid.conv2", width(cfg_.depth), width(cfg_.depth), 3, 1, 1, rng, gain);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    const std::string name = "dec" + std::to_string(l);
    UpLevel level;
    level.up = nn::Conv2d::create(params_, name + ".up", width(l + 1), width(l), 3, 1, 1, rng, gain);
    level.first = nn::Conv2d::create(params_, name + ".conv1", 2 * width(l), width(l), 3, 1, 1, rng, gain);
    level.second = nn::Conv2d::create(params_, name + ".conv2", width(l), width(l), 3, 1, 1, rng, gain);
    decoder_.push_back(level);
  }
  head_ = nn::Conv2d::create(params_, "head", width(0), 3, 1, 1, 0, rng, 1.0);
}

GgdHeads Generator::forward(const nn::Var& input) const {
  const nn::Shape s = input->value.shape;
  if (s.c != input_channels()) {
    throw std::invalid_argument("Generator: expected " + std::to_string(input_channels()) + " input channels, got " +
                                std::to_string(s.c));
  }
  const int div = 1 << cfg_.depth;
  if (s.h % div != 0 || s.w % div != 0) {
    throw std::invalid_argument("Generator: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                                " not divisible by 2^depth = " + std::to_string(div));
  }
  const float slope = cfg_.leaky_slope;
  auto block = [&](const Level& lvl, nn::Var x) {
    x = nn::leaky_relu(lvl.first(params_, x), slope);
    return nn::leaky_relu(lvl.second(params_, x), slope);
  };

  std::vector<nn::Var> skips;
  nn::Var x = cfg_.fusion_inputs > 0 ? fusion_(params_, input) : input;
  for (const auto& lvl : encoder_) {
    x = block(lvl, x);
    skips.push_back(x);
    x = nn::max_pool2(x);
  }
  x = block(bottleneck_, x);
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const UpLevel& lvl = decoder_[i];
    x = nn::leaky_relu(lvl.up(params_, nn::upsample_nearest2(x)), slope);
    x = nn::concat_channels({x, skips[skips.size() - 1 - i]});
    x = nn::leaky_relu(lvl.first(params_, x), slope);
    x = nn::leaky_relu(lvl.second(params_, x), slope);
  }
  nn::Var raw = head_(params_, x);

  const auto& clamp = cfg_.beta_clamp;
  GgdHeads out;
  out.mean = nn::tanh(nn::slice_channel(raw, 0));
  out.alpha = nn::affine(nn::softplus(nn::slice_channel(raw, 1)), 1.0f, static_cast<float>(cfg_.alpha_floor));
  out.beta = nn::affine(nn::sigmoid(nn::slice_channel(raw, 2)), static_cast<float>(clamp.max - clamp.min),
                        static_cast<float>(clamp.min));
  return out;
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const double gain = leaky_gain(cfg_.leaky_slope);
  int in = cfg_.in_channels;
  for (int l = 0; l < cfg_.layers; ++l) {
    const int out = cfg_.base_width * std::min(1 << l, 8);
    body_.push_back(nn::Conv2d::create(params_, "layer" + std::to_string(l), in, out, 4, 2, 1, rng, gain));
    in = out;
  }
  out_ = nn::Conv2d::create(params_, "score", in, 1, 3, 1, 1, rng, 1.0);
}

nn::Var Discriminator::forward(const nn::Var& input) const {
  if (input->value.shape.c != cfg_.in_channels) {
    throw std::invalid_argument("Discriminator: expected " + std::to_string(cfg_.in_channels) +
                                " input channels, got " + std::to_string(input->value.shape.c));
  }
  const int min_size = cfg_.stride();
  if (input->value.shape.h < min_size || input->value.shape.w < min_size) {
    throw std::invalid_argument("Discriminator: input smaller than total stride " + std::to_string(min_size));
  }
  nn::Var x = input;
  for (const auto& conv : body_) x = nn::leaky_relu(conv(params_, x), cfg_.leaky_slope);
  return out_(params_, x);
}

nn::Tensor stack_channels(const std::vector<Image>& channels) {
  if (channels.empty()) throw std::invalid_argument("stack_channels: no channels");
  const int h = channels[0].height;
  const int w = channels[0].width;
  nn::Tensor t(nn::Shape{1, static_cast<int>(channels.size()), h, w});
  for (std::size_t c = 0; c < channels.size(); ++c) {
    require_same_shape(channels[0], channels[c], "stack_channels");
    float* dst = t.channel(0, static_cast<int>(c));
    for (std::size_t i = 0; i < channels[c].size(); ++i) dst[i] = static_cast<float>(channels[c].pixels[i]);
  }
  return t;
}

Image channel_image(const nn::Tensor& t, int sample, int channel) {
  Image img(t.shape.h, t.shape.w);
  const float* src = t.channel(sample, channel);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = src[i];
  return img;
}

ggd::GgdPrediction to_prediction(const GgdHeads& heads, int sample) {
  return ggd::GgdPrediction{channel_image(heads.mean->value, sample, 0), channel_image(heads.alpha->value, sample, 0),
                       channel_image(heads.beta->value, sample, 0)};
}

ggd::GgdPrediction generator_forward(const Generator& g, const std::vector<Image>& input) {
  nn::NoGradGuard no_grad;
  return to_prediction(g.forward(nn::constant(stack_channels(input))), 0);
}

Image discriminator_forward(const Discriminator& d, const std::vector<Image>& input) {
  nn::NoGradGuard no_grad;
  return channel_image(d.forward(nn::constant(stack_channels(input)))->value, 0, 0);
}

}  // namespace upgan

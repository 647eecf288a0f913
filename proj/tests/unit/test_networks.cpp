// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "upgan/networks.hpp"

using namespace upgan;

namespace {

GeneratorConfig small_generator(int in_channels = 1) {
  GeneratorConfig g;
  g.in_channels = in_channels;
  g.base_width = 4;
  g.depth = 2;
  return g;
}

void scale_weights(nn::ParameterList& params, float factor) {
  for (auto& p : params.items()) {
    for (float& v : p.var->value.data) v *= factor;
  }
}

}  // namespace

TEST_CASE("generator output satisfies the prediction invariants for any weights") {
  std::mt19937_64 rng(1);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    for (float factor : {1.0f, 10.0f, 30.0f}) {  // larger factors overflow float activations
      Generator g(small_generator(), seed);
      scale_weights(g.params(), factor);
      const auto pred = generator_forward(g, {testing::random_image(rng, 16, 16, -1.0, 1.0)});
      CHECK_NOTHROW(ggd::validate(pred, g.config().beta_clamp));
      for (std::size_t i = 0; i < pred.mean.size(); ++i) {
        CHECK(std::abs(pred.mean.pixels[i]) <= 1.0);
        CHECK(pred.alpha.pixels[i] >= g.config().alpha_floor * (1 - 1e-6));
      }
    }
  }
}

TEST_CASE("generator shape contract and determinism") {
  std::mt19937_64 rng(2);
  GeneratorConfig cfg = small_generator();
  cfg.depth = 3;
  const Generator g(cfg, 5);
  const Image a = testing::random_image(rng, 64, 64);
  const auto p1 = generator_forward(g, {a});
  const auto p2 = generator_forward(g, {a});
  CHECK(p1.mean.height == 64);
  CHECK(p1.alpha.width == 64);
  CHECK(p1.beta.size() == 64u * 64u);
  CHECK(p1.mean.pixels == p2.mean.pixels);
  CHECK(p1.alpha.pixels == p2.alpha.pixels);
  CHECK(p1.beta.pixels == p2.beta.pixels);
  CHECK(Generator(cfg, 5).params().checksum() == g.params().checksum());
  CHECK(Generator(cfg, 6).params().checksum() != g.params().checksum());
}

TEST_CASE("two-channel phase input gives a valid prediction") {
  std::mt19937_64 rng(3);
  const Generator g(small_generator(2), 9);
  const auto pred = generator_forward(g, {testing::random_image(rng, 32, 32), testing::random_image(rng, 32, 32)});
  CHECK_NOTHROW(ggd::validate(pred));
  CHECK_THROWS_AS(generator_forward(g, {testing::random_image(rng, 32, 32)}), std::invalid_argument);
}

TEST_CASE("generator rejects sizes not divisible by 2^depth") {
  const Generator g(small_generator(), 1);
  CHECK_THROWS_AS(generator_forward(g, {Image(18, 16)}), std::invalid_argument);
  GeneratorConfig bad = small_generator();
  bad.depth = 0;
  CHECK_THROWS_AS(Generator(bad, 1), std::invalid_argument);
}

TEST_CASE("parameter counts follow the architecture") {
  const GeneratorConfig cfg = small_generator();  // widths 4, 8, bottleneck 16
  auto conv = [](int in, int out, int k) { return std::size_t(in) * out * k * k + out; };
  const std::size_t expected = conv(1, 4, 3) + conv(4, 4, 3)      // enc0
                               + conv(4, 8, 3) + conv(8, 8, 3)    // enc1
                               + conv(8, 16, 3) + conv(16, 16, 3) // bottleneck
                               + conv(16, 8, 3) + conv(16, 8, 3) + conv(8, 8, 3)  // dec1
                               + conv(8, 4, 3) + conv(8, 4, 3) + conv(4, 4, 3)    // dec0
                               + conv(4, 3, 1);                                    // head
  CHECK(Generator(cfg, 0).params().scalar_count() == expected);
  CHECK(Generator(cfg, 1).params().scalar_count() == expected);

  DiscriminatorConfig d;
  d.layers = 2;
  d.base_width = 4;
  CHECK(Discriminator(d, 0).params().scalar_count() == conv(1, 4, 4) + conv(4, 8, 4) + conv(8, 1, 3));
}

TEST_CASE("discriminator score map size and receptive field") {
  DiscriminatorConfig cfg;
  cfg.layers = 3;
  cfg.base_width = 4;
  const Discriminator d(cfg, 2);
  const Image scores = discriminator_forward(d, {Image(64, 64, 0.3)});
  CHECK(scores.height == 8);
  CHECK(scores.width == 8);
  CHECK(cfg.output_size(64) == 8);
  CHECK(cfg.stride() == 8);
  // Three stride-2 4x4 layers then a 3x3: 1 + 3·(1+2+4) + 2·8.
  CHECK(cfg.receptive_field() == 38);

  // Impulse probe: cells centred more than one receptive field away from a
  // perturbed pixel must not change.
  std::mt19937_64 rng(3);
  const Image base = testing::random_image(rng, 64, 64);
  Image poked = base;
  poked(40, 24) += 1.0;
  const Image s0 = discriminator_forward(d, {base});
  const Image s1 = discriminator_forward(d, {poked});
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      const bool changed = s0(i, j) != s1(i, j);
      const bool far = std::abs(i * 8 + 4 - 40) > 38 || std::abs(j * 8 + 4 - 24) > 38;
      if (far) CHECK_FALSE(changed);
    }
  }
  CHECK(s0(5, 3) != s1(5, 3));
}

TEST_CASE("discriminator is batch independent and translation consistent") {
  DiscriminatorConfig cfg;
  cfg.layers = 2;
  cfg.base_width = 4;
  const Discriminator d(cfg, 4);
  std::mt19937_64 rng(5);

  nn::Tensor pair({2, 1, 32, 32});
  const nn::Tensor one = testing::random_tensor(rng, {1, 1, 32, 32});
  std::copy(one.data.begin(), one.data.end(), pair.data.begin());
  std::copy(one.data.begin(), one.data.end(), pair.data.begin() + one.numel());
  nn::NoGradGuard no_grad;
  const nn::Tensor s = d.forward(nn::constant(pair))->value;
  const std::size_t plane = s.shape.plane();
  for (std::size_t i = 0; i < plane; ++i) CHECK(s.data[i] == s.data[plane + i]);

  // Shift a compact pattern by one stride (4 px): interior cells shift by one.
  Image x(32, 32, 0.0);
  for (int y = 12; y < 16; ++y) {
    for (int c = 8; c < 12; ++c) x(y, c) = std::sin(0.7 * y + 1.3 * c);
  }
  Image shifted(32, 32, 0.0);
  for (int y = 0; y < 32; ++y) {
    for (int c = 4; c < 32; ++c) shifted(y, c) = x(y, c - 4);
  }
  const Image a = discriminator_forward(d, {x});
  const Image b = discriminator_forward(d, {shifted});
  for (int i = 1; i < a.height - 1; ++i) {
    for (int j = 1; j < a.width - 2; ++j) CHECK(b(i, j + 1) == doctest::Approx(a(i, j)).epsilon(1e-5));
  }
}

TEST_CASE("discriminator input gradient is finite and nonzero") {
  DiscriminatorConfig cfg;
  cfg.layers = 2;
  cfg.base_width = 4;
  const Discriminator d(cfg, 6);
  std::mt19937_64 rng(7);
  const nn::Tensor x = testing::random_tensor(rng, {1, 1, 16, 16});
  nn::Var in = nn::leaf(x, true);
  nn::backward(nn::lsgan_loss(d.forward(in), 0.0f));
  double norm = 0.0;
  for (float g : in->grad.data) {
    CHECK(std::isfinite(g));
    norm += g * g;
  }
  CHECK(norm > 0.0);

  // Central difference on a few pixels.
  auto f = [&](const nn::Tensor& t) {
    nn::NoGradGuard no_grad;
    return nn::item(nn::lsgan_loss(d.forward(nn::constant(t)), 0.0f));
  };
  for (int idx : {0, 37, 120, 255}) {
    nn::Tensor p = x, m = x;
    p.data[idx] += 1e-2f;
    m.data[idx] -= 1e-2f;
    CHECK(testing::close_rel(in->grad.data[idx], (f(p) - f(m)) / 2e-2, 5e-2, 1e-4));
  }
}

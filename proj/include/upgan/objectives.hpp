// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "upgan/ggd.hpp"
#include "upgan/image.hpp"
#include "upgan/networks.hpp"

namespace upgan {

/// Weights of the fidelity and adversarial terms of the generator objective.
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.001;

  void validate() const;
};

/// Least-squares generator term: mean((scores − 1)^2). Scores are averaged
/// over the map so the value does not depend on resolution.
double gen_adv_loss(const Image& fake_scores);
Image gen_adv_loss_gradient(const Image& fake_scores);

/// Least-squares critic objective: mean((real − 1)^2) + mean(fake^2).
double disc_loss(const Image& real_scores, const Image& fake_scores);

struct DiscLossGradient {
  Image d_real;
  Image d_fake;
};
DiscLossGradient disc_loss_gradient(const Image& real_scores, const Image& fake_scores);

struct GeneratorLoss {
  double total = 0.0;
  double fidelity = 0.0;
  double adversarial = 0.0;
};

/// λ1·ggd::nll + λ2·gen_adv_loss with the components kept for logging.
GeneratorLoss gen_total_loss(const ggd::GgdPrediction& pred, const Image& target, const Image& fake_scores,
                             const LossWeights& weights, double alpha_floor = ggd::kAlphaFloor);

// Graph-level counterparts used by the trainer.

struct GeneratorLossVar {
  nn::Var total;
  double fidelity = 0.0;
  double adversarial = 0.0;
};

GeneratorLossVar gen_total_loss(const GgdHeads& heads, const nn::Tensor& target, const nn::Var& fake_scores,
                                const LossWeights& weights, double alpha_floor);

nn::Var disc_loss(const nn::Var& real_scores, const nn::Var& fake_scores);

}  // namespace upgan

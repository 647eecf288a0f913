// SPDX-License-Identifier: Apache-2.0
#include "upgan/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace upgan {

namespace {

void require_scores(const Image& scores, const char* what) {
  if (scores.empty()) throw std::invalid_argument(std::string(what) + ": empty score map");
  for (double v : scores.pixels) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite score");
  }
}

double mean_sq_dev(const Image& scores, double target) {
  double acc = 0.0;
  for (double v : scores.pixels) acc += (v - target) * (v - target);
  return acc / static_cast<double>(scores.size());
}

Image mean_sq_dev_gradient(const Image& scores, double target) {
  Image g(scores.height, scores.width);
  const double scale = 2.0 / static_cast<double>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) g.pixels[i] = scale * (scores.pixels[i] - target);
  return g;
}

}  // namespace

void LossWeights::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("LossWeights: weights must be nonnegative");
  if (lambda1 == 0.0 && lambda2 == 0.0) throw std::invalid_argument("LossWeights: both weights are zero");
}

double gen_adv_loss(const Image& fake_scores) {
  require_scores(fake_scores, "gen_adv_loss");
  return mean_sq_dev(fake_scores, 1.0);
}

Image gen_adv_loss_gradient(const Image& fake_scores) {
  require_scores(fake_scores, "gen_adv_loss_gradient");
  return mean_sq_dev_gradient(fake_scores, 1.0);
}

double disc_loss(const Image& real_scores, const Image& fake_scores) {
  require_scores(real_scores, "disc_loss real");
  require_scores(fake_scores, "disc_loss fake");
  return mean_sq_dev(real_scores, 1.0) + mean_sq_dev(fake_scores, 0.0);
}

DiscLossGradient disc_loss_gradient(const Image& real_scores, const Image& fake_scores) {
  require_scores(real_scores, "disc_loss_gradient real");
  require_scores(fake_scores, "disc_loss_gradient fake");
  return {mean_sq_dev_gradient(real_scores, 1.0), mean_sq_dev_gradient(fake_scores, 0.0)};
}

GeneratorLoss gen_total_loss(const ggd::GgdPrediction& pred, const Image& target, const Image& fake_scores,
                             const LossWeights& weights, double alpha_floor) {
  weights.validate();
  GeneratorLoss out;
  out.fidelity = ggd::nll(pred, target, alpha_floor);
  out.adversarial = gen_adv_loss(fake_scores);
  out.total = weights.lambda1 * out.fidelity + weights.lambda2 * out.adversarial;
  return out;
}

GeneratorLossVar gen_total_loss(const GgdHeads& heads, const nn::Tensor& target, const nn::Var& fake_scores,
                                const LossWeights& weights, double alpha_floor) {
  weights.validate();
  nn::Var fidelity = nn::ggd_nll_loss(heads.mean, heads.alpha, heads.beta, target, alpha_floor);
  nn::Var adversarial = nn::lsgan_loss(fake_scores, 1.0f);
  GeneratorLossVar out;
  out.fidelity = nn::item(fidelity);
  out.adversarial = nn::item(adversarial);
  out.total = nn::add(nn::affine(fidelity, static_cast<float>(weights.lambda1), 0.0f),
                      nn::affine(adversarial, static_cast<float>(weights.lambda2), 0.0f));
  return out;
}

nn::Var disc_loss(const nn::Var& real_scores, const nn::Var& fake_scores) {
  return nn::add(nn::lsgan_loss(real_scores, 1.0f), nn::lsgan_loss(fake_scores, 0.0f));
}

}  // namespace upgan

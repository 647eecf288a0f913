// SPDX-License-Identifier: Apache-2.0
#include "upgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace upgan {

namespace {

struct Batch {
  nn::Var source;
  nn::Tensor target;
};

Batch make_batch(const std::vector<const PairedSample*>& pool, const std::vector<std::size_t>& order,
                 std::size_t begin, std::size_t end) {
  const int h = pool.front()->target_b.height;
  const int w = pool.front()->target_b.width;
  const int n = static_cast<int>(end - begin);
  nn::Tensor a(nn::Shape{n, 1, h, w});
  nn::Tensor b(nn::Shape{n, 1, h, w});
  for (int i = 0; i < n; ++i) {
    const PairedSample& s = *pool[order[begin + i]];
    std::transform(s.input_a.pixels.begin(), s.input_a.pixels.end(), a.sample(i),
                   [](double v) { return static_cast<float>(v); });
    std::transform(s.target_b.pixels.begin(), s.target_b.pixels.end(), b.sample(i),
                   [](double v) { return static_cast<float>(v); });
  }
  return {nn::constant(std::move(a)), std::move(b)};
}

std::vector<const PairedSample*> training_pool(const Dataset& data) {
  auto pool = data.select(Split::train);
  if (pool.empty()) throw TrainingError("training split is empty");
  return pool;
}

void check_finite(double v, const char* what, const StepRecord& rec) {
  if (std::isfinite(v)) return;
  std::ostringstream msg;
  msg << "diverged: " << what << " is " << v << " at stage " << stage_name(rec.stage) << ", phase " << rec.phase
      << ", epoch " << rec.epoch << ", step " << rec.step << " (lr " << rec.lr << ", last G grad norm "
      << rec.g_grad_norm << ", D grad norm " << rec.d_grad_norm << ")";
  throw TrainingError(msg.str());
}

std::int64_t steps_per_epoch(const TrainState& state, std::size_t pool_size) {
  const auto b = static_cast<std::size_t>(state.config.batch_size);
  return static_cast<std::int64_t>((pool_size + b - 1) / b);
}

// Validation after an epoch; tracks the best last-phase MAE.
EpochRecord end_epoch(const Dataset& data, TrainState& state, Stage stage, int phase, int trained_phases) {
  EpochRecord rec;
  rec.stage = stage;
  rec.phase = phase;
  rec.epoch = state.progress.epoch;
  rec.global_step = state.progress.global_step;
  rec.val_mae = split_mae(state.model, data, Split::val, trained_phases, state.config.batch_size);
  if (trained_phases == state.model.phases() && rec.val_mae.back() < state.best_val_mae) {
    state.best_val_mae = rec.val_mae.back();
    state.best_weights = generator_weights(state.model);
    rec.improved = true;
  }
  state.epochs.push_back(rec);
  return rec;
}

void set_trainable(TrainState& state, int m) {
  for (int k = 0; k < state.model.phases(); ++k) {
    state.model.generator(k).params().set_requires_grad(k == m);
    const bool critic = k == m || (k < m && !state.config.freeze_discriminators);
    state.model.discriminator(k).params().set_requires_grad(critic);
  }
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  weights.validate();
  if (epochs_init < 1) throw std::invalid_argument("TrainConfig: epochs_init must be >= 1");
  if (epochs_finetune < 0) throw std::invalid_argument("TrainConfig: epochs_finetune must be >= 0");
  if (!(lr_init > 0.0) || !(lr_finetune > 0.0)) throw std::invalid_argument("TrainConfig: learning rates must be > 0");
  if (!(lr_finetune < lr_init)) throw std::invalid_argument("TrainConfig: lr_finetune must be below lr_init");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (anneal_period < 1) throw std::invalid_argument("TrainConfig: anneal_period must be >= 1");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("TrainConfig: grad_clip must be >= 0");
}

namespace {

double clip_factor(double norm, double limit) { return limit > 0.0 && norm > limit ? limit / norm : 1.0; }

}  // namespace

double cosine_lr(std::int64_t step, std::int64_t total, double lr_max) {
  if (total <= 0) throw std::invalid_argument("cosine_lr: total must be positive");
  if (step < 0) throw std::invalid_argument("cosine_lr: negative step");
  if (step >= total) return 0.0;
  return lr_max * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total))) / 2.0;
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::init:
      return "init";
    case Stage::finetune:
      return "finetune";
    case Stage::done:
      return "done";
  }
  return "?";
}

TrainState TrainState::create(const TrainConfig& config) {
  config.validate();
  TrainState state;
  state.config = config;
  state.model = Cascade(config.model, config.seed);
  const nn::AdamConfig adam{config.adam_beta1, config.adam_beta2, config.adam_eps};
  for (int m = 0; m < state.model.phases(); ++m) {
    state.g_opt.emplace_back(state.model.generator(m).params(), adam);
    state.d_opt.emplace_back(state.model.discriminator(m).params(), adam);
  }
  state.rng.seed(config.seed ^ 0x5851f42d4c957f2dull);
  return state;
}

void init_phase(int m, const Dataset& data, TrainState& state, const TrainHooks& hooks) {
  const int phases = state.model.phases();
  if (m < 0 || m >= phases) throw std::out_of_range("init_phase: phase " + std::to_string(m) + " out of range");
  if (state.progress.initialized < m) {
    throw TrainingError("init_phase(" + std::to_string(m) + ") called before phase " +
                        std::to_string(state.progress.initialized) + " was initialized");
  }
  if (state.progress.initialized > m) throw TrainingError("phase " + std::to_string(m) + " is already initialized");
  const bool resuming = state.progress.stage == Stage::init && state.progress.phase == m;
  if (!resuming) {
    state.progress.stage = Stage::init;
    state.progress.phase = m;
    state.progress.epoch = 0;
    state.progress.step = 0;
  }

  const auto pool = training_pool(data);
  const std::int64_t per_epoch = steps_per_epoch(state, pool.size());
  const std::int64_t total = per_epoch * state.config.anneal_period;
  const float floor = static_cast<float>(state.config.model.generator.alpha_floor);
  set_trainable(state, m);
  Generator& gen = state.model.generator(m);
  Discriminator& disc = state.model.discriminator(m);

  while (state.progress.epoch < state.config.epochs_init) {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state.rng);
    for (std::size_t begin = 0; begin < order.size(); begin += state.config.batch_size) {
      const Batch batch = make_batch(pool, order, begin, std::min(order.size(), begin + state.config.batch_size));
      StepRecord rec;
      rec.stage = Stage::init;
      rec.phase = m;
      rec.epoch = state.progress.epoch;
      rec.step = state.progress.step;
      rec.global_step = state.progress.global_step;
      rec.lr = cosine_lr(std::min(state.progress.step, total), total, state.config.lr_init);

      const auto heads = state.model.forward(batch.source, m + 1);
      const nn::Var real = state.model.critic_input(nn::constant(batch.target), batch.source);

      // Critic step(s): D_m, plus earlier critics when they are not frozen.
      double d_loss = 0.0;
      double d_norm = 0.0;
      for (int k = 0; k <= m; ++k) {
        Discriminator& dk = state.model.discriminator(k);
        if (k < m && state.config.freeze_discriminators) continue;
        dk.params().zero_grad();
        const nn::Var fake = state.model.critic_input(nn::detach(heads[k].mean), batch.source);
        const nn::Var loss = disc_loss(dk.forward(real), dk.forward(fake));
        if (k == m) d_loss = nn::item(loss);
        nn::backward(loss);
        const double norm = dk.params().grad_norm();
        if (k == m) d_norm = norm;
        dk.params().scale_grads(clip_factor(norm, state.config.grad_clip));
        state.d_opt[k].step(dk.params(), rec.lr);
      }
      rec.d_loss = d_loss;
      rec.d_grad_norm = d_norm;
      check_finite(rec.d_loss, "critic loss", rec);

      // Generator step against the updated critic; the critic's own weights
      // take no gradient here.
      disc.params().set_requires_grad(false);
      gen.params().zero_grad();
      const nn::Var fake_scores = disc.forward(state.model.critic_input(heads[m].mean, batch.source));
      const GeneratorLossVar g = gen_total_loss(heads[m], batch.target, fake_scores, state.config.weights, floor);
      rec.g_total = nn::item(g.total);
      rec.adversarial = g.adversarial;
      rec.fidelity = {g.fidelity};
      check_finite(rec.g_total, "generator loss", rec);
      nn::backward(g.total);
      rec.g_grad_norm = gen.params().grad_norm();
      check_finite(rec.g_grad_norm, "generator gradient norm", rec);
      gen.params().scale_grads(clip_factor(rec.g_grad_norm, state.config.grad_clip));
      state.g_opt[m].step(gen.params(), rec.lr);
      disc.params().set_requires_grad(true);

      ++state.progress.step;
      ++state.progress.global_step;
      state.steps.push_back(rec);
      if (hooks.on_step) hooks.on_step(state, rec);
    }
    ++state.progress.epoch;
    const EpochRecord erec = end_epoch(data, state, Stage::init, m, m + 1);
    const bool finished = state.progress.epoch == state.config.epochs_init;
    if (finished) {
      // Phase complete: the next unit starts from a clean slate.
      state.progress.initialized = m + 1;
      state.progress.epoch = 0;
      state.progress.step = 0;
      if (m + 1 < phases) {
        state.progress.phase = m + 1;
      } else {
        state.progress.stage = state.config.epochs_finetune > 0 ? Stage::finetune : Stage::done;
        state.progress.phase = -1;
      }
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(state, erec);
    if (finished) break;
  }
}

void finetune_all(const Dataset& data, TrainState& state, const TrainHooks& hooks) {
  const int phases = state.model.phases();
  if (state.progress.initialized < phases) {
    throw TrainingError("finetune_all: phase " + std::to_string(state.progress.initialized) + " is not initialized");
  }
  if (state.progress.stage == Stage::done) return;
  state.progress.stage = Stage::finetune;
  state.progress.phase = -1;

  const auto pool = training_pool(data);
  const std::int64_t per_epoch = steps_per_epoch(state, pool.size());
  const std::int64_t total = per_epoch * state.config.anneal_period;
  const float floor = static_cast<float>(state.config.model.generator.alpha_floor);
  for (int k = 0; k < phases; ++k) {
    state.model.generator(k).params().set_requires_grad(true);
    state.model.discriminator(k).params().set_requires_grad(true);
  }

  while (state.progress.epoch < state.config.epochs_finetune) {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state.rng);
    for (std::size_t begin = 0; begin < order.size(); begin += state.config.batch_size) {
      const Batch batch = make_batch(pool, order, begin, std::min(order.size(), begin + state.config.batch_size));
      StepRecord rec;
      rec.stage = Stage::finetune;
      rec.phase = -1;
      rec.epoch = state.progress.epoch;
      rec.step = state.progress.step;
      rec.global_step = state.progress.global_step;
      rec.lr = cosine_lr(std::min(state.progress.step, total), total, state.config.lr_finetune);

      const auto heads = state.model.forward(batch.source);
      const nn::Var real = state.model.critic_input(nn::constant(batch.target), batch.source);

      // Critics have disjoint weights, so one backward over the summed loss
      // gives each its own gradient.
      nn::Var d_total;
      for (int k = 0; k < phases; ++k) {
        Discriminator& dk = state.model.discriminator(k);
        dk.params().zero_grad();
        const nn::Var fake = state.model.critic_input(nn::detach(heads[k].mean), batch.source);
        const nn::Var loss = disc_loss(dk.forward(real), dk.forward(fake));
        d_total = k == 0 ? loss : nn::add(d_total, loss);
      }
      rec.d_loss = nn::item(d_total);
      check_finite(rec.d_loss, "critic loss", rec);
      nn::backward(d_total);
      double d_sq = 0.0;
      for (int k = 0; k < phases; ++k) {
        const double n = state.model.discriminator(k).params().grad_norm();
        d_sq += n * n;
      }
      rec.d_grad_norm = std::sqrt(d_sq);
      for (int k = 0; k < phases; ++k) {
        auto& params = state.model.discriminator(k).params();
        params.scale_grads(clip_factor(rec.d_grad_norm, state.config.grad_clip));
        state.d_opt[k].step(params, rec.lr);
      }

      nn::Var g_total;
      for (int k = 0; k < phases; ++k) {
        Discriminator& dk = state.model.discriminator(k);
        dk.params().set_requires_grad(false);
        state.model.generator(k).params().zero_grad();
        const nn::Var scores = dk.forward(state.model.critic_input(heads[k].mean, batch.source));
        const GeneratorLossVar g = gen_total_loss(heads[k], batch.target, scores, state.config.weights, floor);
        rec.fidelity.push_back(g.fidelity);
        rec.adversarial += g.adversarial;
        g_total = k == 0 ? g.total : nn::add(g_total, g.total);
      }
      rec.g_total = nn::item(g_total);
      check_finite(rec.g_total, "generator loss", rec);
      nn::backward(g_total);
      double g_sq = 0.0;
      for (int k = 0; k < phases; ++k) {
        const double n = state.model.generator(k).params().grad_norm();
        g_sq += n * n;
      }
      rec.g_grad_norm = std::sqrt(g_sq);
      check_finite(rec.g_grad_norm, "generator gradient norm", rec);
      for (int k = 0; k < phases; ++k) {
        state.model.generator(k).params().scale_grads(clip_factor(rec.g_grad_norm, state.config.grad_clip));
        state.g_opt[k].step(state.model.generator(k).params(), rec.lr);
        state.model.discriminator(k).params().set_requires_grad(true);
      }

      ++state.progress.step;
      ++state.progress.global_step;
      state.steps.push_back(rec);
      if (hooks.on_step) hooks.on_step(state, rec);
    }
    ++state.progress.epoch;
    const EpochRecord erec = end_epoch(data, state, Stage::finetune, -1, phases);
    if (state.progress.epoch == state.config.epochs_finetune) state.progress.stage = Stage::done;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state, erec);
  }
  state.progress.stage = Stage::done;
}

void train(const Dataset& data, TrainState& state, const TrainHooks& hooks) {
  if (data.select(Split::train).empty()) throw TrainingError("training split is empty");
  if (data.select(Split::val).empty()) throw TrainingError("validation split is empty");
  while (state.progress.initialized < state.model.phases()) init_phase(state.progress.initialized, data, state, hooks);
  finetune_all(data, state, hooks);
}

std::vector<double> split_mae(const Cascade& model, const Dataset& data, Split split, int phases, int batch_size) {
  const auto pool = data.select(split);
  std::vector<double> acc(phases, 0.0);
  if (pool.empty()) return acc;
  nn::NoGradGuard no_grad;
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    const Batch batch = make_batch(pool, order, begin, end);
    const auto heads = model.forward(batch.source, phases);
    for (int m = 0; m < phases; ++m) {
      for (std::size_t i = begin; i < end; ++i) {
        const PairedSample& s = *pool[i];
        const double scale = 0.5 * (s.b_range.hi - s.b_range.lo);
        const float* pred = heads[m].mean->value.sample(static_cast<int>(i - begin));
        double err = 0.0;
        for (std::size_t p = 0; p < s.target_b.size(); ++p) err += std::abs(pred[p] - s.target_b.pixels[p]);
        acc[m] += scale * err / static_cast<double>(s.target_b.size());
      }
    }
  }
  for (double& v : acc) v /= static_cast<double>(pool.size());
  return acc;
}

std::vector<nn::Tensor> generator_weights(const Cascade& model) {
  std::vector<nn::Tensor> out;
  for (int m = 0; m < model.phases(); ++m) {
    for (const auto& p : model.generator(m).params().items()) out.push_back(p.var->value);
  }
  return out;
}

void set_generator_weights(Cascade& model, const std::vector<nn::Tensor>& weights) {
  std::size_t i = 0;
  for (int m = 0; m < model.phases(); ++m) {
    for (auto& p : model.generator(m).params().items()) {
      if (i >= weights.size()) throw std::invalid_argument("set_generator_weights: too few tensors");
      nn::require_shape(weights[i], p.var->value.shape, "set_generator_weights");
      p.var->value = weights[i++];
    }
  }
  if (i != weights.size()) throw std::invalid_argument("set_generator_weights: too many tensors");
}

bool restore_best(TrainState& state) {
  if (state.best_weights.empty()) return false;
  set_generator_weights(state.model, state.best_weights);
  return true;
}

}  // namespace upgan

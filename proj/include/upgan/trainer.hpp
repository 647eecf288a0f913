// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "upgan/cascade.hpp"
#include "upgan/dataset.hpp"
#include "upgan/nn/module.hpp"
#include "upgan/objectives.hpp"

namespace upgan {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  CascadeConfig model{};
  int epochs_init = 30;       // per phase
  int epochs_finetune = 30;
  double lr_init = 0.002;
  double lr_finetune = 0.0005;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  /// Cosine period in epochs; each stage restarts the schedule at its own
  /// peak rate. Steps past the period train at rate 0.
  int anneal_period = 1000;
  LossWeights weights{};
  std::uint64_t seed = 0;
  /// Freeze D_k along with G_k for k < m while phase m initializes. When
  /// off, earlier critics keep training against their (frozen) generators.
  bool freeze_discriminators = true;
  /// Gradients whose global norm exceeds this are rescaled to it before the
  /// Adam step (per network during init, over all phases while fine-tuning).
  /// A freshly initialized GGD head can produce norms around 1e11 on its
  /// first batch, which would pin Adam's second moments for thousands of
  /// steps. 0 disables clipping.
  double grad_clip = 10.0;

  void validate() const;
};

/// lr_max·(1 + cos(π·step/total))/2; steps beyond `total` give 0.
double cosine_lr(std::int64_t step, std::int64_t total, double lr_max);

enum class Stage { init, finetune, done };
const char* stage_name(Stage s);

struct StepRecord {
  Stage stage = Stage::init;
  int phase = 0;  // phase being initialized; -1 while fine-tuning
  int epoch = 0;
  std::int64_t step = 0;  // within the current stage unit
  std::int64_t global_step = 0;
  double lr = 0.0;
  double d_loss = 0.0;
  double g_total = 0.0;
  double adversarial = 0.0;
  /// One entry per phase in the loss (one while initializing, M when
  /// fine-tuning).
  std::vector<double> fidelity;
  double g_grad_norm = 0.0;
  double d_grad_norm = 0.0;
};

struct EpochRecord {
  Stage stage = Stage::init;
  int phase = 0;
  int epoch = 0;
  std::int64_t global_step = 0;
  /// Validation MAE on the original intensity scale for phases 0..m.
  std::vector<double> val_mae;
  /// Set when the last phase's validation MAE improved on the best so far.
  bool improved = false;
};

/// Where training stands. A unit is one phase initialization or the
/// fine-tuning stage; epochs and steps count within the current unit.
struct Progress {
  Stage stage = Stage::init;
  int phase = 0;
  int epoch = 0;
  std::int64_t step = 0;
  std::int64_t global_step = 0;
  int initialized = 0;
};

struct TrainState {
  TrainConfig config;
  Cascade model;
  std::vector<nn::Adam> g_opt;
  std::vector<nn::Adam> d_opt;
  Progress progress;
  std::mt19937_64 rng;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double best_val_mae = std::numeric_limits<double>::infinity();
  /// Generator weights (all phases, list order) at the best validation epoch.
  std::vector<nn::Tensor> best_weights;

  static TrainState create(const TrainConfig& config);
};

struct TrainHooks {
  std::function<void(const TrainState&, const StepRecord&)> on_step;
  std::function<void(const TrainState&, const EpochRecord&)> on_epoch_end;
};

/// Trains G_m and D_m with every earlier phase frozen. Resumes mid-phase when
/// the state's progress points into phase m.
void init_phase(int m, const Dataset& data, TrainState& state, const TrainHooks& hooks = {});

/// Joint stage: Σ_m L_tot(phase m) backpropagated through the whole cascade,
/// every critic updated against its own phase.
void finetune_all(const Dataset& data, TrainState& state, const TrainHooks& hooks = {});

/// Runs whatever remains: pending phase initializations, then fine-tuning.
void train(const Dataset& data, TrainState& state, const TrainHooks& hooks = {});

/// Mean per-phase MAE over a split, on the original intensity scale.
std::vector<double> split_mae(const Cascade& model, const Dataset& data, Split split, int phases, int batch_size);

std::vector<nn::Tensor> generator_weights(const Cascade& model);
void set_generator_weights(Cascade& model, const std::vector<nn::Tensor>& weights);

/// Loads the best validation weights into the model, if any were recorded.
bool restore_best(TrainState& state);

}  // namespace upgan

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "upgan/nn/tensor.hpp"

namespace upgan::nn {

/// One value in a dynamically recorded computation. Nodes that do not depend
/// on any gradient-requiring input keep neither their inputs nor a backward
/// function, so graphs over frozen weights cost nothing to hold.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer() {
    if (grad.data.empty()) grad = Tensor(value.shape);
    return grad;
  }
};

using Var = std::shared_ptr<Node>;

/// While alive on a thread, new nodes record no backward information.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad);

/// Copy of the value with no link to the producing graph.
Var detach(const Var& x);

/// Reverse-mode sweep from a scalar root; accumulates into every reachable
/// node with requires_grad, including leaves.
void backward(const Var& root);

// Layers

/// 2-D cross-correlation. `weight` is (out, in, k, k), `bias` is (1, out, 1, 1).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var leaky_relu(const Var& x, float slope);
Var max_pool2(const Var& x);
Var upsample_nearest2(const Var& x);
Var concat_channels(const std::vector<Var>& parts);
Var slice_channel(const Var& x, int channel);

// Elementwise

Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var affine(const Var& x, float scale, float shift);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

// Domain ops

/// Per-pixel GGD standard deviation from scale and shape maps.
Var ggd_sigma(const Var& alpha, const Var& beta);

/// Divides every sample by its own sum over all channels and pixels; the
/// denominator is max(sum, floor).
Var normalize_per_sample(const Var& x, double floor = 1e-12);

/// Scalar mean over the batch of the per-image GGD fidelity loss.
Var ggd_nll_loss(const Var& mean, const Var& alpha, const Var& beta, const Tensor& target, double alpha_floor);

/// Scalar mean((scores − target)^2).
Var lsgan_loss(const Var& scores, float target);

/// Scalar read-out of a 1x1x1x1 node.
double item(const Var& x);

}  // namespace upgan::nn

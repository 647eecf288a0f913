// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "upgan/nn/graph.hpp"

namespace upgan::nn {

struct Parameter {
  std::string name;
  Var var;
};

/// Ordered, named list of trainable leaves. Order is part of the checkpoint
/// layout and must not depend on anything but the architecture config.
class ParameterList {
 public:
  void add(std::string name, Tensor init);

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;

  void set_requires_grad(bool on);
  void zero_grad();
  double grad_norm() const;
  void scale_grads(double factor);
  /// FNV-1a over the raw bytes of every value.
  std::uint64_t checksum() const;

  const Var& operator[](std::size_t i) const { return items_[i].var; }

 private:
  std::vector<Parameter> items_;
};

/// 2-D convolution with He-normal init. Holds indices into a ParameterList.
struct Conv2d {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int stride = 1;
  int pad = 0;

  static Conv2d create(ParameterList& params, const std::string& name, int in_ch, int out_ch, int kernel,
                       int stride, int pad, std::mt19937_64& rng, double gain = 1.4142135623730951);
  Var operator()(const ParameterList& params, const Var& x) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are stored per parameter in list order.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterList& params, AdamConfig cfg);

  /// Applies one update to every parameter with requires_grad and a
  /// populated gradient. Parameters without a gradient keep their moments.
  void step(ParameterList& params, double lr);

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

}  // namespace upgan::nn

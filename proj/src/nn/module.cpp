// SPDX-License-Identifier: Apache-2.0
#include "upgan/nn/module.hpp"

#include <cmath>
#include <cstring>

namespace upgan::nn {

void ParameterList::add(std::string name, Tensor init) {
  items_.push_back(Parameter{std::move(name), leaf(std::move(init), true)});
}

std::size_t ParameterList::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : items_) total += p.var->value.numel();
  return total;
}

void ParameterList::set_requires_grad(bool on) {
  for (auto& p : items_) {
    p.var->requires_grad = on;
    if (!on) p.var->grad = Tensor();
  }
}

void ParameterList::zero_grad() {
  for (auto& p : items_) p.var->grad = Tensor();
}

double ParameterList::grad_norm() const {
  double acc = 0.0;
  for (const auto& p : items_) {
    for (float g : p.var->grad.data) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

void ParameterList::scale_grads(double factor) {
  for (auto& p : items_) {
    for (float& g : p.var->grad.data) g = static_cast<float>(g * factor);
  }
}

std::uint64_t ParameterList::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : items_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.var->value.data.data());
    const std::size_t len = p.var->value.data.size() * sizeof(float);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

Conv2d Conv2d::create(ParameterList& params, const std::string& name, int in_ch, int out_ch, int kernel,
                      int stride, int pad, std::mt19937_64& rng, double gain) {
  Tensor w(Shape{out_ch, in_ch, kernel, kernel});
  const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(fan_in));
  for (float& v : w.data) v = static_cast<float>(normal(rng));
  Conv2d conv;
  conv.stride = stride;
  conv.pad = pad;
  conv.weight = params.size();
  params.add(name + ".weight", std::move(w));
  conv.bias = params.size();
  params.add(name + ".bias", Tensor(Shape{1, out_ch, 1, 1}));
  return conv;
}

Var Conv2d::operator()(const ParameterList& params, const Var& x) const {
  return conv2d(x, params[weight], params[bias], stride, pad);
}

Adam::Adam(const ParameterList& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.var->value.shape);
    v_.emplace_back(p.var->value.shape);
  }
}

void Adam::step(ParameterList& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Node& node = *params[i];
    if (!node.requires_grad || node.grad.data.empty()) continue;
    float* m = m_[i].data.data();
    float* v = v_[i].data.data();
    float* value = node.value.data.data();
    const float* g = node.grad.data.data();
    for (std::size_t j = 0; j < node.value.numel(); ++j) {
      const double gj = g[j];
      const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      value[j] -= static_cast<float>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps));
    }
  }
}

}  // namespace upgan::nn

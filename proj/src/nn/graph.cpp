// SPDX-License-Identifier: Apache-2.0
#include "upgan/nn/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "upgan/ggd.hpp"

namespace upgan::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local bool t_grad_enabled = true;

Var make_node(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!t_grad_enabled) return node;
  for (const auto& in : inputs) {
    if (in->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(fn);
  }
  return node;
}

Tensor scalar_tensor(double v) {
  Tensor t(Shape{1, 1, 1, 1});
  t.data[0] = static_cast<float>(v);
  return t;
}

void require_same(const Var& a, const Var& b, const char* what) {
  if (!(a->value.shape == b->value.shape)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a->value.shape.str() + " vs " +
                                b->value.shape.str());
  }
}

// Column buffer layout: row = (c * k + ky) * k + kx, column = oy * out_w + ox.
void im2col(const float* src, int channels, int h, int w, int k, int stride, int pad, int out_h, int out_w,
            float* cols) {
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const float* plane = src + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          float* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, 0.0f);
            continue;
          }
          const float* line = plane + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            // Valid output range is [lo, hi): contiguous copy with zero margins.
            const int lo = std::clamp(pad - kx, 0, out_w);
            const int hi = std::clamp(w + pad - kx, lo, out_w);
            std::fill(dst, dst + lo, 0.0f);
            std::copy(line + lo - pad + kx, line + hi - pad + kx, dst + lo);
            std::fill(dst + hi, dst + out_w, 0.0f);
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* cols, int channels, int h, int w, int k, int stride, int pad, int out_h, int out_w,
            float* dst) {
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    float* plane = dst + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          float* line = plane + static_cast<std::size_t>(iy) * w;
          const float* src = row + static_cast<std::size_t>(oy) * out_w;
          if (stride == 1) {
            const int lo = std::clamp(pad - kx, 0, out_w);
            const int hi = std::clamp(w + pad - kx, lo, out_w);
            float* out = line - pad + kx;
            for (int ox = lo; ox < hi; ++ox) out[ox] += src[ox];
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out(x->value.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = fwd(x->value.data[i]);
  return make_node(std::move(out), {x}, [deriv](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g.data[i] += self.grad.data[i] * deriv(in.value.data[i], self.value.data[i]);
    }
  });
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

Var detach(const Var& x) { return constant(x->value); }

void backward(const Var& root) {
  if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer().data[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.data.empty()) node->backward_fn(*node);
  }
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x->value.shape;
  const Shape ws = weight->value.shape;
  if (ws.h != ws.w) throw std::invalid_argument("conv2d: square kernels only");
  if (ws.c != xs.c) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                                std::to_string(ws.c));
  }
  if (bias->value.numel() != static_cast<std::size_t>(ws.n)) throw std::invalid_argument("conv2d: bias size");
  const int k = ws.h;
  const int out_h = (xs.h + 2 * pad - k) / stride + 1;
  const int out_w = (xs.w + 2 * pad - k) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("conv2d: input smaller than kernel");

  const int rows = xs.c * k * k;
  const int cols_n = out_h * out_w;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);

  Tensor out(Shape{xs.n, ws.n, out_h, out_w});
  FloatBuffer cols(pointwise ? 0 : static_cast<std::size_t>(rows) * cols_n);
  ConstMapMat w_mat(weight->value.data.data(), ws.n, rows);
  for (int i = 0; i < xs.n; ++i) {
    const float* src = x->value.sample(i);
    if (!pointwise) im2col(src, xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w, cols.data());
    ConstMapMat col_mat(pointwise ? src : cols.data(), rows, cols_n);
    MapMat out_mat(out.sample(i), ws.n, cols_n);
    out_mat.noalias() = w_mat * col_mat;
    for (int o = 0; o < ws.n; ++o) out_mat.row(o).array() += bias->value.data[o];
  }

  return make_node(std::move(out), {x, weight, bias}, [=](Node& self) {
    Node& in = *self.inputs[0];
    Node& w = *self.inputs[1];
    Node& b = *self.inputs[2];
    FloatBuffer col_buf(pointwise ? 0 : static_cast<std::size_t>(rows) * cols_n);
    FloatBuffer dcol_buf(static_cast<std::size_t>(rows) * cols_n);
    ConstMapMat w_mat(w.value.data.data(), ws.n, rows);
    for (int i = 0; i < xs.n; ++i) {
      ConstMapMat dout(self.grad.sample(i), ws.n, cols_n);
      if (b.requires_grad) {
        Tensor& gb = b.grad_buffer();
        for (int o = 0; o < ws.n; ++o) gb.data[o] += dout.row(o).sum();
      }
      if (w.requires_grad) {
        const float* src = in.value.sample(i);
        if (!pointwise) im2col(src, xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w, col_buf.data());
        ConstMapMat col_mat(pointwise ? src : col_buf.data(), rows, cols_n);
        MapMat gw(w.grad_buffer().data.data(), ws.n, rows);
        gw.noalias() += dout * col_mat.transpose();
      }
      if (in.requires_grad) {
        Tensor& gx = in.grad_buffer();
        if (pointwise) {
          MapMat gx_mat(gx.sample(i), rows, cols_n);
          gx_mat.noalias() += w_mat.transpose() * dout;
        } else {
          MapMat dcol(dcol_buf.data(), rows, cols_n);
          dcol.noalias() = w_mat.transpose() * dout;
          col2im(dcol_buf.data(), xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w, gx.sample(i));
        }
      }
    }
  });
}

Var leaky_relu(const Var& x, float slope) {
  return unary(
      x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float in, float) { return in > 0.0f ? 1.0f : slope; });
}

Var max_pool2(const Var& x) {
  const Shape s = x->value.shape;
  if (s.h % 2 != 0 || s.w % 2 != 0) throw std::invalid_argument("max_pool2: odd spatial size " + s.str());
  Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor out(os);
  std::vector<std::uint32_t> argmax(os.numel());
  for (int i = 0; i < s.n; ++i) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = x->value.channel(i, c);
      float* dst = out.channel(i, c);
      std::uint32_t* arg = argmax.data() + (static_cast<std::size_t>(i) * s.c + c) * os.plane();
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) {
          std::uint32_t best = static_cast<std::uint32_t>((2 * y) * s.w + 2 * xx);
          for (std::uint32_t cand : {best + 1, best + static_cast<std::uint32_t>(s.w),
                                     best + static_cast<std::uint32_t>(s.w) + 1}) {
            if (src[cand] > src[best]) best = cand;
          }
          dst[y * os.w + xx] = src[best];
          arg[y * os.w + xx] = best;
        }
      }
    }
  }
  return make_node(std::move(out), {x}, [s, os, argmax = std::move(argmax)](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (int i = 0; i < s.n; ++i) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t base = (static_cast<std::size_t>(i) * s.c + c) * os.plane();
        float* dst = g.channel(i, c);
        const float* src = self.grad.channel(i, c);
        for (std::size_t p = 0; p < os.plane(); ++p) dst[argmax[base + p]] += src[p];
      }
    }
  });
}

Var upsample_nearest2(const Var& x) {
  const Shape s = x->value.shape;
  Shape os{s.n, s.c, s.h * 2, s.w * 2};
  Tensor out(os);
  for (int i = 0; i < s.n; ++i) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = x->value.channel(i, c);
      float* dst = out.channel(i, c);
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[(y / 2) * s.w + xx / 2];
      }
    }
  }
  return make_node(std::move(out), {x}, [s, os](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int i = 0; i < s.n; ++i) {
      for (int c = 0; c < s.c; ++c) {
        float* dst = g.channel(i, c);
        const float* src = self.grad.channel(i, c);
        for (int y = 0; y < os.h; ++y) {
          for (int xx = 0; xx < os.w; ++xx) dst[(y / 2) * s.w + xx / 2] += src[y * os.w + xx];
        }
      }
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  Shape os = parts[0]->value.shape;
  os.c = 0;
  for (const auto& p : parts) {
    const Shape& s = p->value.shape;
    if (s.n != os.n || s.h != os.h || s.w != os.w) {
      throw std::invalid_argument("concat_channels: incompatible " + s.str() + " vs " + parts[0]->value.shape.str());
    }
    os.c += s.c;
  }
  Tensor out(os);
  for (int i = 0; i < os.n; ++i) {
    float* dst = out.sample(i);
    for (const auto& p : parts) {
      const std::size_t len = static_cast<std::size_t>(p->value.shape.c) * os.plane();
      std::copy_n(p->value.sample(i), len, dst);
      dst += len;
    }
  }
  return make_node(std::move(out), parts, [os](Node& self) {
    for (int i = 0; i < os.n; ++i) {
      const float* src = self.grad.sample(i);
      for (auto& p : self.inputs) {
        const std::size_t len = static_cast<std::size_t>(p->value.shape.c) * os.plane();
        if (p->requires_grad) {
          float* dst = p->grad_buffer().sample(i);
          for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
        }
        src += len;
      }
    }
  });
}

Var slice_channel(const Var& x, int channel) {
  const Shape s = x->value.shape;
  if (channel < 0 || channel >= s.c) throw std::invalid_argument("slice_channel: channel out of range");
  Tensor out(Shape{s.n, 1, s.h, s.w});
  for (int i = 0; i < s.n; ++i) std::copy_n(x->value.channel(i, channel), s.plane(), out.sample(i));
  return make_node(std::move(out), {x}, [s, channel](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int i = 0; i < s.n; ++i) {
      float* dst = g.channel(i, channel);
      const float* src = self.grad.sample(i);
      for (std::size_t j = 0; j < s.plane(); ++j) dst[j] += src[j];
    }
  });
}

Var tanh(const Var& x) {
  return unary(
      x, [](float v) { return std::tanh(v); }, [](float, float out) { return 1.0f - out * out; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); }, [](float, float out) { return out * (1.0f - out); });
}

Var softplus(const Var& x) {
  return unary(
      x, [](float v) { return v > 20.0f ? v : std::log1p(std::exp(v)); },
      [](float in, float) { return 1.0f / (1.0f + std::exp(-in)); });
}

Var affine(const Var& x, float scale, float shift) {
  return unary(
      x, [scale, shift](float v) { return scale * v + shift; }, [scale](float, float) { return scale; });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out(a->value.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] + b->value.data[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += self.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a->value.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * b->value.data[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& lhs = *self.inputs[0];
    Node& rhs = *self.inputs[1];
    if (lhs.requires_grad) {
      Tensor& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += self.grad.data[i] * rhs.value.data[i];
    }
    if (rhs.requires_grad) {
      Tensor& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += self.grad.data[i] * lhs.value.data[i];
    }
  });
}

Var ggd_sigma(const Var& alpha, const Var& beta) {
  require_same(alpha, beta, "ggd_sigma");
  Tensor out(alpha->value.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data[i] = static_cast<float>(ggd::sigma(alpha->value.data[i], beta->value.data[i]));
  }
  return make_node(std::move(out), {alpha, beta}, [](Node& self) {
    Node& a = *self.inputs[0];
    Node& b = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      const auto g = ggd::sigma_grad(a.value.data[i], b.value.data[i]);
      if (a.requires_grad) a.grad_buffer().data[i] += static_cast<float>(self.grad.data[i] * g.d_alpha);
      if (b.requires_grad) b.grad_buffer().data[i] += static_cast<float>(self.grad.data[i] * g.d_beta);
    }
  });
}

Var normalize_per_sample(const Var& x, double floor) {
  const Shape s = x->value.shape;
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  Tensor out(s);
  std::vector<double> sums(s.n);
  for (int i = 0; i < s.n; ++i) {
    const float* src = x->value.sample(i);
    double total = 0.0;
    for (std::size_t j = 0; j < per; ++j) total += src[j];
    sums[i] = std::max(total, floor);
    float* dst = out.sample(i);
    for (std::size_t j = 0; j < per; ++j) dst[j] = static_cast<float>(src[j] / sums[i]);
  }
  return make_node(std::move(out), {x}, [s, per, floor, sums = std::move(sums)](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const Tensor& in = self.inputs[0]->value;
    for (int i = 0; i < s.n; ++i) {
      const float* gout = self.grad.sample(i);
      const float* val = self.value.sample(i);
      float* dst = g.sample(i);
      const bool floored = [&] {
        double total = 0.0;
        const float* src = in.sample(i);
        for (std::size_t j = 0; j < per; ++j) total += src[j];
        return total < floor;
      }();
      // y_j = x_j / S  =>  dx_k = (gy_k − Σ_j gy_j y_j) / S
      double dot = 0.0;
      if (!floored) {
        for (std::size_t j = 0; j < per; ++j) dot += static_cast<double>(gout[j]) * val[j];
      }
      for (std::size_t j = 0; j < per; ++j) dst[j] += static_cast<float>((gout[j] - dot) / sums[i]);
    }
  });
}

Var ggd_nll_loss(const Var& mean, const Var& alpha, const Var& beta, const Tensor& target, double alpha_floor) {
  require_same(mean, alpha, "ggd_nll_loss alpha");
  require_same(mean, beta, "ggd_nll_loss beta");
  require_shape(target, mean->value.shape, "ggd_nll_loss target");
  const std::size_t count = target.numel();
  if (count == 0) throw std::invalid_argument("ggd_nll_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    total += ggd::pixel_nll(static_cast<double>(mean->value.data[i]) - target.data[i], alpha->value.data[i],
                            beta->value.data[i], alpha_floor);
  }
  return make_node(scalar_tensor(total / static_cast<double>(count)), {mean, alpha, beta},
                   [target, alpha_floor, count](Node& self) {
                     Node& m = *self.inputs[0];
                     Node& a = *self.inputs[1];
                     Node& b = *self.inputs[2];
                     const double scale = self.grad.data[0] / static_cast<double>(count);
                     for (std::size_t i = 0; i < count; ++i) {
                       const auto g = ggd::pixel_nll_grad(static_cast<double>(m.value.data[i]) - target.data[i],
                                                          a.value.data[i], b.value.data[i], alpha_floor);
                       if (m.requires_grad) m.grad_buffer().data[i] += static_cast<float>(scale * g.d_residual);
                       if (a.requires_grad) a.grad_buffer().data[i] += static_cast<float>(scale * g.d_alpha);
                       if (b.requires_grad) b.grad_buffer().data[i] += static_cast<float>(scale * g.d_beta);
                     }
                   });
}

Var lsgan_loss(const Var& scores, float target) {
  const std::size_t count = scores->value.numel();
  if (count == 0) throw std::invalid_argument("lsgan_loss: empty score map");
  double total = 0.0;
  for (float s : scores->value.data) total += (static_cast<double>(s) - target) * (static_cast<double>(s) - target);
  return make_node(scalar_tensor(total / static_cast<double>(count)), {scores}, [target, count](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double scale = 2.0 * self.grad.data[0] / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      g.data[i] += static_cast<float>(scale * (static_cast<double>(in.value.data[i]) - target));
    }
  });
}

double item(const Var& x) {
  if (x->value.numel() != 1) throw std::invalid_argument("item: not a scalar");
  return x->value.data[0];
}

}  // namespace upgan::nn

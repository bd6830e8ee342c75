// SPDX-License-Identifier: Apache-2.0
//
// Layer primitives with hand-written backward passes. All functions are pure
// over value tensors; accumulation order is fixed so results are
// bit-reproducible.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vdcnn/errors.hpp"
#include "vdcnn/tensor.hpp"

namespace vdcnn {

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, stride 1, symmetric zero padding)

struct ConvParams {
  Tensor filter;  // (out_maps, in_maps, kt, kf)
  Tensor bias;    // (out_maps)
  std::size_t pad_t = 0;
  std::size_t pad_f = 0;

  std::size_t out_maps() const { return filter.dim(0); }
  std::size_t in_maps() const { return filter.dim(1); }
  std::size_t kt() const { return filter.dim(2); }
  std::size_t kf() const { return filter.dim(3); }
};

struct ConvGrads {
  Tensor input;
  Tensor filter;
  Tensor bias;
};

namespace detail {

struct ConvGeometry {
  std::size_t in_maps, t, f, kt, kf, pad_t, pad_f, out_t, out_f;
  std::size_t patch() const { return in_maps * kt * kf; }
  std::size_t positions() const { return out_t * out_f; }
};

inline ConvGeometry conv_geometry(const Tensor& input, const ConvParams& p) {
  if (p.filter.rank() != 4)
    throw DimensionError("conv filter must be rank 4, got " + shape_string(p.filter.shape()));
  if (input.rank() != 3)
    throw DimensionError("conv input must be (maps,T,F), got " + shape_string(input.shape()));
  if (input.dim(0) != p.in_maps())
    throw DimensionError("conv input has " + std::to_string(input.dim(0)) +
                         " maps but filter expects " + std::to_string(p.in_maps()));
  if (p.bias.rank() != 1 || p.bias.dim(0) != p.out_maps())
    throw DimensionError("conv bias must have length " + std::to_string(p.out_maps()));
  const std::size_t t = input.dim(1), f = input.dim(2);
  if (t + 2 * p.pad_t < p.kt() || f + 2 * p.pad_f < p.kf())
    throw DimensionError("conv input " + shape_string(input.shape()) +
                         " smaller than filter " + shape_string(p.filter.shape()));
  return {input.dim(0), t, f, p.kt(), p.kf(), p.pad_t, p.pad_f,
          t + 2 * p.pad_t - p.kt() + 1, f + 2 * p.pad_f - p.kf() + 1};
}

// Patch matrix (patch x positions); row k = (map, dt, df) in row-major order.
inline std::vector<double> im2col(const Tensor& input, const ConvGeometry& g) {
  const std::size_t positions = g.positions();
  std::vector<double> col(g.patch() * positions, 0.0);
  const double* in = input.data().data();
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.in_maps; ++c)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t b = 0; b < g.kf; ++b, ++k) {
        double* row = col.data() + k * positions;
        for (std::size_t ot = 0; ot < g.out_t; ++ot) {
          const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + a) -
                                    static_cast<std::ptrdiff_t>(g.pad_t);
          if (it < 0 || it >= static_cast<std::ptrdiff_t>(g.t)) continue;
          const double* src = in + (c * g.t + static_cast<std::size_t>(it)) * g.f;
          double* dst = row + ot * g.out_f;
          for (std::size_t of = 0; of < g.out_f; ++of) {
            const std::ptrdiff_t jf = static_cast<std::ptrdiff_t>(of + b) -
                                      static_cast<std::ptrdiff_t>(g.pad_f);
            if (jf >= 0 && jf < static_cast<std::ptrdiff_t>(g.f))
              dst[of] = src[jf];
          }
        }
      }
  return col;
}

}  // namespace detail

/// Output extents (T + 2 pad_t - kt + 1, F + 2 pad_f - kf + 1). No activation.
inline Tensor conv2d_forward(const Tensor& input, const ConvParams& params) {
  const auto g = detail::conv_geometry(input, params);
  const auto col = detail::im2col(input, g);
  const std::size_t out_maps = params.out_maps(), patch = g.patch(), positions = g.positions();
  Tensor out({out_maps, g.out_t, g.out_f});
  const double* w = params.filter.data().data();
  for (std::size_t o = 0; o < out_maps; ++o) {
    double* dst = out.data().data() + o * positions;
    for (std::size_t k = 0; k < patch; ++k) {
      const double wk = w[o * patch + k];
      const double* src = col.data() + k * positions;
      for (std::size_t p = 0; p < positions; ++p) dst[p] += wk * src[p];
    }
    const double b = params.bias[o];
    for (std::size_t p = 0; p < positions; ++p) dst[p] += b;
  }
  return out;
}

inline ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                                 const Tensor& grad_out) {
  const auto g = detail::conv_geometry(input, params);
  const std::size_t out_maps = params.out_maps(), patch = g.patch(), positions = g.positions();
  if (grad_out.shape() != Shape{out_maps, g.out_t, g.out_f})
    throw DimensionError("conv grad_out " + shape_string(grad_out.shape()) +
                         " does not match output (" + std::to_string(out_maps) + "," +
                         std::to_string(g.out_t) + "," + std::to_string(g.out_f) + ")");
  const auto col = detail::im2col(input, g);
  ConvGrads grads{Tensor(input.shape()), Tensor(params.filter.shape()),
                  Tensor(params.bias.shape())};
  const double* go = grad_out.data().data();
  const double* w = params.filter.data().data();
  double* gw = grads.filter.data().data();

  std::vector<double> grad_col(patch * positions, 0.0);
  for (std::size_t o = 0; o < out_maps; ++o) {
    const double* gr = go + o * positions;
    double bsum = 0.0;
    for (std::size_t p = 0; p < positions; ++p) bsum += gr[p];
    grads.bias[o] = bsum;
    for (std::size_t k = 0; k < patch; ++k) {
      const double* src = col.data() + k * positions;
      double acc = 0.0;
      for (std::size_t p = 0; p < positions; ++p) acc += gr[p] * src[p];
      gw[o * patch + k] = acc;
      const double wk = w[o * patch + k];
      double* gc = grad_col.data() + k * positions;
      for (std::size_t p = 0; p < positions; ++p) gc[p] += wk * gr[p];
    }
  }

  double* gi = grads.input.data().data();
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.in_maps; ++c)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t b = 0; b < g.kf; ++b, ++k) {
        const double* gc = grad_col.data() + k * positions;
        for (std::size_t ot = 0; ot < g.out_t; ++ot) {
          const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + a) -
                                    static_cast<std::ptrdiff_t>(g.pad_t);
          if (it < 0 || it >= static_cast<std::ptrdiff_t>(g.t)) continue;
          double* dst = gi + (c * g.t + static_cast<std::size_t>(it)) * g.f;
          for (std::size_t of = 0; of < g.out_f; ++of) {
            const std::ptrdiff_t jf = static_cast<std::ptrdiff_t>(of + b) -
                                      static_cast<std::ptrdiff_t>(g.pad_f);
            if (jf >= 0 && jf < static_cast<std::ptrdiff_t>(g.f))
              dst[jf] += gc[ot * g.out_f + of];
          }
        }
      }
  return grads;
}

// ---------------------------------------------------------------------------
// Non-overlapping max pooling

struct PoolParams {
  std::size_t pt = 1;
  std::size_t pf = 1;
  bool truncate_remainder = false;
};

/// Flat input index of the winning element for each output position.
struct PoolIndexMap {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> winners;
};

struct PoolResult {
  Tensor output;
  PoolIndexMap index_map;
};

inline Shape pooled_shape(const Shape& in, const PoolParams& p) {
  if (in.size() != 3)
    throw DimensionError("pool input must be (maps,T,F), got " + shape_string(in));
  if (p.pt == 0 || p.pf == 0) throw DimensionError("pool extents must be positive");
  if (!p.truncate_remainder) {
    if (in[1] % p.pt != 0)
      throw DivisibilityError("time extent " + std::to_string(in[1]) +
                              " not divisible by pool " + std::to_string(p.pt));
    if (in[2] % p.pf != 0)
      throw DivisibilityError("frequency extent " + std::to_string(in[2]) +
                              " not divisible by pool " + std::to_string(p.pf));
  }
  if (in[1] < p.pt || in[2] < p.pf)
    throw DimensionError("pool window larger than input " + shape_string(in));
  return {in[0], in[1] / p.pt, in[2] / p.pf};
}

inline PoolResult maxpool_forward(const Tensor& input, const PoolParams& params) {
  const Shape out_shape = pooled_shape(input.shape(), params);
  const std::size_t maps = out_shape[0], ot = out_shape[1], of = out_shape[2];
  const std::size_t t = input.dim(1), f = input.dim(2);
  PoolResult r{Tensor(out_shape), {input.shape(), out_shape, {}}};
  r.index_map.winners.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t m = 0; m < maps; ++m)
    for (std::size_t i = 0; i < ot; ++i)
      for (std::size_t j = 0; j < of; ++j, ++o) {
        std::size_t best = (m * t + i * params.pt) * f + j * params.pf;
        double best_v = input[best];
        for (std::size_t a = 0; a < params.pt; ++a)
          for (std::size_t b = 0; b < params.pf; ++b) {
            const std::size_t idx = (m * t + i * params.pt + a) * f + j * params.pf + b;
            if (input[idx] > best_v) {  // strict: first row-major max wins ties
              best_v = input[idx];
              best = idx;
            }
          }
        r.output[o] = best_v;
        r.index_map.winners[o] = best;
      }
  return r;
}

inline Tensor maxpool_backward(const PoolIndexMap& map, const Tensor& grad_out) {
  if (grad_out.shape() != map.output_shape)
    throw DimensionError("pool grad_out " + shape_string(grad_out.shape()) +
                         " does not match index map " + shape_string(map.output_shape));
  Tensor grad_in(map.input_shape);
  for (std::size_t o = 0; o < map.winners.size(); ++o)
    grad_in[map.winners[o]] += grad_out[o];
  return grad_in;
}

// ---------------------------------------------------------------------------
// Fully connected

struct FcGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

inline void check_fc(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw DimensionError("fc weight must be rank 2");
  if (weight.dim(1) != input.size())
    throw DimensionError("fc weight expects " + std::to_string(weight.dim(1)) +
                         " inputs, got " + std::to_string(input.size()));
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
    throw DimensionError("fc bias length must equal " + std::to_string(weight.dim(0)));
}

/// y = W x + b over the flattened input.
inline Tensor fc_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_fc(input, weight, bias);
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  Tensor out({out_dim});
  const double* x = input.data().data();
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double* w = weight.data().data() + o * in_dim;
    double acc = 0.0;
    for (std::size_t i = 0; i < in_dim; ++i) acc += w[i] * x[i];
    out[o] = acc + bias[o];
  }
  return out;
}

inline FcGrads fc_backward(const Tensor& input, const Tensor& weight,
                           const Tensor& grad_out) {
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  if (weight.dim(1) != input.size() || grad_out.size() != out_dim)
    throw DimensionError("fc_backward: input " + shape_string(input.shape()) + ", weight " +
                         shape_string(weight.shape()) + ", grad " +
                         shape_string(grad_out.shape()));
  FcGrads g{Tensor(input.shape()), Tensor(weight.shape()), Tensor({out_dim})};
  const double* x = input.data().data();
  double* gx = g.input.data().data();
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double go = grad_out[o];
    g.bias[o] = go;
    const double* w = weight.data().data() + o * in_dim;
    double* gw = g.weight.data().data() + o * in_dim;
    for (std::size_t i = 0; i < in_dim; ++i) {
      gw[i] = go * x[i];
      gx[i] += go * w[i];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Activations

inline Tensor relu_forward(Tensor x) {
  for (auto& v : x.values()) v = v > 0.0 ? v : 0.0;
  return x;
}

// Subgradient at exactly 0 is 0.
inline Tensor relu_backward(const Tensor& input, Tensor grad_out) {
  input.require_same_shape(grad_out, "relu_backward");
  for (std::size_t i = 0; i < input.size(); ++i)
    if (!(input[i] > 0.0)) grad_out[i] = 0.0;
  return grad_out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor sigmoid_forward(Tensor x) {
  for (auto& v : x.values()) v = sigmoid(v);
  return x;
}

// Takes the forward output y, since dy/dx = y (1 - y).
inline Tensor sigmoid_backward(const Tensor& output, Tensor grad_out) {
  output.require_same_shape(grad_out, "sigmoid_backward");
  for (std::size_t i = 0; i < output.size(); ++i)
    grad_out[i] *= output[i] * (1.0 - output[i]);
  return grad_out;
}

// ---------------------------------------------------------------------------
// Softmax + cross entropy

inline Tensor log_softmax(const Tensor& logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits.values()) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits.values()) s += std::exp(v - m);
  const double lse = m + std::log(s);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

struct SoftmaxCe {
  double loss;
  Tensor grad;  // p - onehot(label)
};

inline SoftmaxCe softmax_ce(const Tensor& logits, std::size_t label) {
  if (label >= logits.size())
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  Tensor logp = log_softmax(logits);
  SoftmaxCe r{-logp[label], Tensor(logits.shape())};
  for (std::size_t i = 0; i < logits.size(); ++i) r.grad[i] = std::exp(logp[i]);
  r.grad[label] -= 1.0;
  return r;
}

// ---------------------------------------------------------------------------
// Optimisation helpers

/// Elementwise clamp; values already inside [lo, hi] are returned untouched.
inline void clip_gradient_inplace(Tensor& grads, double lo, double hi) {
  if (!(lo < hi)) throw DomainError("clip bounds require lo < hi");
  for (auto& v : grads.values()) {
    if (v < lo) v = lo;
    else if (v > hi) v = hi;
  }
}

inline Tensor clip_gradient(Tensor grads, double lo, double hi) {
  clip_gradient_inplace(grads, lo, hi);
  return grads;
}

// Classical momentum: v <- mu v - lr g; p <- p + v.
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum)
      : lr_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must be in [0,1)");
  }

  void step(const ParamRefs& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size())
      throw DimensionError("sgd: " + std::to_string(params.size()) + " params vs " +
                           std::to_string(grads.size()) + " grads");
    for (const Tensor& g : grads)
      if (!g.all_finite()) throw DivergenceError("non-finite gradient in SGD step");
    if (velocity_.empty())
      for (const Tensor* p : params) velocity_.emplace_back(p->shape());
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      Tensor& v = velocity_[i];
      p.require_same_shape(grads[i], "sgd");
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = momentum_ * v[j] - lr_ * grads[i][j];
        p[j] += v[j];
      }
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor> velocity_;
};

inline Tensor concat(const Tensor& a, const Tensor& b) {
  std::vector<double> v(a.values());
  v.insert(v.end(), b.values().begin(), b.values().end());
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

}  // namespace vdcnn

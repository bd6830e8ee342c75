// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vdcnn/arch.hpp"
#include "vdcnn/errors.hpp"
#include "vdcnn/ops.hpp"
#include "vdcnn/random.hpp"
#include "vdcnn/tensor.hpp"

namespace vdcnn {

struct ConvLayer {
  ConvParams params;
};
struct PoolLayer {
  PoolParams params;
};
struct FcLayer {
  Tensor weight;  // (out, in)
  Tensor bias;
};
struct ReluLayer {};
struct SigmoidLayer {};
struct FlattenLayer {};

using Layer = std::variant<ConvLayer, PoolLayer, FcLayer, ReluLayer, SigmoidLayer, FlattenLayer>;

/// Per-call record of layer inputs (and pooling winners) for backward.
struct Tape {
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;
  std::vector<PoolIndexMap> pool_maps;
};

/// Ordered feed-forward layer sequence with parameters in declaration order.
class LayerStack {
 public:
  LayerStack() = default;

  void push(Layer layer) { layers_.push_back(std::move(layer)); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Tensor forward(Tensor x, Tape* tape = nullptr) const {
    if (tape) {
      tape->inputs.clear();
      tape->outputs.clear();
      tape->pool_maps.clear();
    }
    for (const Layer& layer : layers_) {
      Tensor y = std::visit(
          [&](const auto& l) -> Tensor {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, ConvLayer>) {
              return conv2d_forward(x, l.params);
            } else if constexpr (std::is_same_v<L, PoolLayer>) {
              auto r = maxpool_forward(x, l.params);
              if (tape) tape->pool_maps.push_back(std::move(r.index_map));
              return std::move(r.output);
            } else if constexpr (std::is_same_v<L, FcLayer>) {
              return fc_forward(x, l.weight, l.bias);
            } else if constexpr (std::is_same_v<L, ReluLayer>) {
              return relu_forward(x);
            } else if constexpr (std::is_same_v<L, SigmoidLayer>) {
              return sigmoid_forward(x);
            } else {
              return x.flattened();
            }
          },
          layer);
      if (tape) {
        tape->inputs.push_back(std::move(x));
        tape->outputs.push_back(y);
      }
      x = std::move(y);
    }
    return x;
  }

  /// Accumulates parameter gradients into `grads` (starting at `offset`, in
  /// parameters() order) and returns the gradient with respect to the input.
  Tensor backward(const Tape& tape, Tensor grad, std::vector<Tensor>& grads,
                  std::size_t offset = 0) const {
    std::size_t slot = offset + parameter_tensors();
    std::size_t pool_index = tape.pool_maps.size();
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Tensor& x = tape.inputs[i];
      grad = std::visit(
          [&](const auto& l) -> Tensor {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, ConvLayer>) {
              auto g = conv2d_backward(x, l.params, grad);
              slot -= 2;
              grads[slot] += g.filter;
              grads[slot + 1] += g.bias;
              return std::move(g.input);
            } else if constexpr (std::is_same_v<L, PoolLayer>) {
              return maxpool_backward(tape.pool_maps[--pool_index], grad);
            } else if constexpr (std::is_same_v<L, FcLayer>) {
              auto g = fc_backward(x, l.weight, grad);
              slot -= 2;
              grads[slot] += g.weight;
              grads[slot + 1] += g.bias;
              return std::move(g.input);
            } else if constexpr (std::is_same_v<L, ReluLayer>) {
              return relu_backward(x, std::move(grad));
            } else if constexpr (std::is_same_v<L, SigmoidLayer>) {
              return sigmoid_backward(tape.outputs[i], std::move(grad));
            } else {
              return grad.reshaped(x.shape());
            }
          },
          layers_[i]);
    }
    return grad;
  }

  ParamRefs parameters() {
    ParamRefs out;
    for (Layer& layer : layers_) {
      if (auto* c = std::get_if<ConvLayer>(&layer)) {
        out.push_back(&c->params.filter);
        out.push_back(&c->params.bias);
      } else if (auto* f = std::get_if<FcLayer>(&layer)) {
        out.push_back(&f->weight);
        out.push_back(&f->bias);
      }
    }
    return out;
  }

  ConstParamRefs parameters() const {
    ConstParamRefs out;
    for (const Tensor* p : const_cast<LayerStack*>(this)->parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_tensors() const {
    std::size_t n = 0;
    for (const Layer& layer : layers_)
      if (std::holds_alternative<ConvLayer>(layer) || std::holds_alternative<FcLayer>(layer))
        n += 2;
    return n;
  }

 private:
  std::vector<Layer> layers_;
};

namespace detail {

// Appends layers [begin, end) of `spec` to `stack`, drawing weights from rng
// in declaration order. `shape` is the running activation shape.
inline void append_layers(LayerStack& stack, const ArchitectureSpec& spec, std::size_t begin,
                          std::size_t end, Shape& shape, Rng& rng) {
  for (std::size_t i = begin; i < end; ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::kConv: {
        const std::size_t in_maps = shape[0], field = l.kt * l.kf;
        ConvParams p;
        p.filter = glorot_uniform({l.out_maps, in_maps, l.kt, l.kf}, in_maps * field,
                                  l.out_maps * field, rng);
        p.bias = Tensor({l.out_maps});
        p.pad_t = l.pad_t;
        p.pad_f = l.pad_f;
        stack.push(ConvLayer{std::move(p)});
        shape = {l.out_maps, shape[1] + 2 * l.pad_t - l.kt + 1, shape[2] + 2 * l.pad_f - l.kf + 1};
        break;
      }
      case LayerKind::kPool: {
        PoolParams p{l.pt, l.pf, l.truncate};
        shape = pooled_shape(shape, p);
        stack.push(PoolLayer{p});
        break;
      }
      case LayerKind::kFc: {
        const std::size_t in = shape_size(shape);
        stack.push(FcLayer{glorot_uniform({l.out_dim, in}, in, l.out_dim, rng), Tensor({l.out_dim})});
        shape = {l.out_dim};
        break;
      }
      case LayerKind::kRelu: stack.push(ReluLayer{}); break;
      case LayerKind::kSigmoid: stack.push(SigmoidLayer{}); break;
      case LayerKind::kFlatten:
        stack.push(FlattenLayer{});
        shape = {shape_size(shape)};
        break;
      case LayerKind::kConcatAux:
        throw ShapeError(spec.name + ": concat-aux requires a joint network");
    }
  }
}

inline FcLayer make_fc(std::size_t in, std::size_t out, Rng& rng) {
  return FcLayer{glorot_uniform({out, in}, in, out, rng), Tensor({out})};
}

}  // namespace detail

/// One training or evaluation example: a (maps, context, F) window, an
/// optional auxiliary vector, and its state label.
struct FrameSample {
  Tensor maps;
  std::vector<double> aux;
  std::uint32_t label = 0;
};

/// Plain feed-forward acoustic model built from an ArchitectureSpec.
class FeedForwardNet {
 public:
  FeedForwardNet() = default;

  FeedForwardNet(ArchitectureSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    const ShapeTrace trace = derive_shapes(spec_);  // throws ShapeError / DivisibilityError
    Rng rng(seed);
    Shape shape = spec_.input_shape;
    detail::append_layers(stack_, spec_, 0, spec_.layers.size(), shape, rng);
    stack_.push(detail::make_fc(shape_size(shape), spec_.n_states, rng));
  }

  const ArchitectureSpec& spec() const { return spec_; }
  std::size_t n_states() const { return spec_.n_states; }

  Tensor logits(const FrameSample& s) const { return stack_.forward(check_input(s.maps)); }
  Tensor logits(const Tensor& maps) const { return stack_.forward(check_input(maps)); }

  /// Adds d(CE)/d(params) for one sample into grads; returns the loss.
  double accumulate(const FrameSample& s, std::vector<Tensor>& grads) const {
    Tape tape;
    const Tensor z = stack_.forward(check_input(s.maps), &tape);
    auto ce = softmax_ce(z, s.label);
    stack_.backward(tape, std::move(ce.grad), grads);
    return ce.loss;
  }

  /// Gradient of an arbitrary upstream signal with respect to the input.
  Tensor input_gradient(const Tensor& maps, const Tensor& grad_logits) const {
    Tape tape;
    stack_.forward(check_input(maps), &tape);
    auto grads = zeros_like(stack_.parameters());
    return stack_.backward(tape, grad_logits, grads);
  }

  ParamRefs parameters() { return stack_.parameters(); }
  ConstParamRefs parameters() const { return stack_.parameters(); }
  const LayerStack& stack() const { return stack_; }
  LayerStack& stack() { return stack_; }

 private:
  const Tensor& check_input(const Tensor& maps) const {
    if (maps.shape() != spec_.input_shape)
      throw DimensionError(spec_.name + " expects input " + shape_string(spec_.input_shape) +
                           ", got " + shape_string(maps.shape()));
    return maps;
  }

  ArchitectureSpec spec_;
  LayerStack stack_;
};

/// Builds a network after checking the family rules; baselines are checked
/// against their own (structural-only) rule set, so no override is needed
/// for catalog entries. Pass check=false to skip validation entirely.
inline FeedForwardNet build_network(const ArchitectureSpec& spec, std::uint64_t seed,
                                    std::size_t channel_base = 64, bool check = true) {
  if (check) {
    const auto v = validate(spec, channel_base);
    if (!v.empty()) throw ShapeError(spec.name + ": " + format_violation(v.front()));
  }
  return FeedForwardNet(spec, seed);
}

}  // namespace vdcnn

// SPDX-License-Identifier: Apache-2.0
//
// Randomised finite-difference checks over every differentiable primitive
// and the composite models. Each entry runs `instances` random cases and
// reports the worst relative error.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <tuple>
#include <string>
#include <vector>

#include "vdcnn/arch.hpp"
#include "vdcnn/gradcheck.hpp"
#include "vdcnn/joint.hpp"
#include "vdcnn/lstmp.hpp"
#include "vdcnn/network.hpp"
#include "vdcnn/ops.hpp"
#include "vdcnn/random.hpp"

namespace vdcnn {

namespace detail {

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Flattens / scatters a parameter list so a whole model can be checked as a
// single point.
inline Tensor flatten_params(const ConstParamRefs& ps) {
  std::vector<double> v;
  for (const Tensor* p : ps) v.insert(v.end(), p->values().begin(), p->values().end());
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

inline void scatter_params(const Tensor& flat, const ParamRefs& ps) {
  std::size_t k = 0;
  for (Tensor* p : ps)
    for (auto& v : p->values()) v = flat[k++];
}

inline Tensor flatten_grads(const std::vector<Tensor>& gs) {
  std::vector<double> v;
  for (const Tensor& g : gs) v.insert(v.end(), g.values().begin(), g.values().end());
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

// Inputs whose entries are at least `gap` apart, so max-pool winners and
// ReLU signs do not change under the finite-difference step.
inline Tensor separated_tensor(const Shape& s, double gap, Rng& rng) {
  Tensor t(s);
  std::vector<double> v(t.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = (static_cast<double>(i) - static_cast<double>(v.size()) / 2.0 + 0.5) * gap;
  rng.shuffle(v);
  t.values() = std::move(v);
  return t;
}

inline std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.index(hi - lo + 1);
}

}  // namespace detail

struct GradSuiteOptions {
  std::size_t instances = 20;
  double tolerance = 1e-4;
  std::uint64_t seed = 2024;
};

class GradSuite {
 public:
  explicit GradSuite(GradSuiteOptions opt = {}) : opt_(opt) {}

  static std::vector<std::string> scopes() {
    return {"conv", "pool", "fc", "relu", "sigmoid", "softmax-ce", "chain", "lstmp", "lstmp-peephole",
            "joint"};
  }

  std::vector<GradCheckReport> run(const std::string& scope) const {
    if (scope == "all") {
      std::vector<GradCheckReport> out;
      for (const auto& s : scopes())
        for (auto& r : run(s)) out.push_back(std::move(r));
      return out;
    }
    if (scope == "conv") return conv();
    if (scope == "pool") return {pool()};
    if (scope == "fc") return fc();
    if (scope == "relu") return {relu()};
    if (scope == "sigmoid") return {sigmoid_op()};
    if (scope == "softmax-ce") return {softmax()};
    if (scope == "chain") return {chain()};
    if (scope == "lstmp") return {lstmp(false)};
    if (scope == "lstmp-peephole") return {lstmp(true)};
    if (scope == "joint") return {joint()};
    throw DomainError("unknown gradient-check scope '" + scope + "'");
  }

 private:
  template <class F>
  GradCheckReport repeat(const std::string& name, F&& make_case) const {
    std::uint64_t salt = 0;
    for (unsigned char c : name) salt = salt * 131 + c;
    Rng rng(opt_.seed ^ salt);
    GradCheckReport worst{name, 0.0, true};
    for (std::size_t i = 0; i < opt_.instances; ++i) {
      const GradCheckReport r = make_case(rng);
      worst.max_rel_error = std::max(worst.max_rel_error, r.max_rel_error);
    }
    worst.passed = worst.max_rel_error < opt_.tolerance;
    return worst;
  }

  std::vector<GradCheckReport> conv() const {
    const auto make = [](Rng& rng) {
      const std::size_t in = detail::between(rng, 1, 3), out = detail::between(rng, 1, 3);
      const std::size_t kt = detail::between(rng, 1, 3), kf = detail::between(rng, 1, 3);
      ConvParams p;
      p.pad_t = rng.index(2);
      p.pad_f = rng.index(2);
      p.filter = uniform_tensor({out, in, kt, kf}, -1, 1, rng);
      p.bias = uniform_tensor({out}, -1, 1, rng);
      const Tensor x = uniform_tensor({in, detail::between(rng, 3, 6), detail::between(rng, 3, 6)}, -1, 1, rng);
      return std::make_tuple(p, x);
    };
    const GradCheckReport wrt_input = repeat("conv (input)", [&](Rng& rng) {
      auto [p, x] = make(rng);
      const Tensor r = uniform_tensor(conv2d_forward(x, p).shape(), -1, 1, rng);
      return grad_check("conv", [&](const Tensor& z) {
        return std::pair{detail::dot(r, conv2d_forward(z, p)), conv2d_backward(z, p, r).input};
      }, x, opt_.tolerance);
    });
    const GradCheckReport wrt_filter = repeat("conv (filter)", [&](Rng& rng) {
      auto [p, x] = make(rng);
      const Tensor r = uniform_tensor(conv2d_forward(x, p).shape(), -1, 1, rng);
      return grad_check("conv", [&](const Tensor& w) {
        ConvParams q = p;
        q.filter = w;
        return std::pair{detail::dot(r, conv2d_forward(x, q)), conv2d_backward(x, q, r).filter};
      }, p.filter, opt_.tolerance);
    });
    const GradCheckReport wrt_bias = repeat("conv (bias)", [&](Rng& rng) {
      auto [p, x] = make(rng);
      const Tensor r = uniform_tensor(conv2d_forward(x, p).shape(), -1, 1, rng);
      return grad_check("conv", [&](const Tensor& b) {
        ConvParams q = p;
        q.bias = b;
        return std::pair{detail::dot(r, conv2d_forward(x, q)), conv2d_backward(x, q, r).bias};
      }, p.bias, opt_.tolerance);
    });
    return {wrt_input, wrt_filter, wrt_bias};
  }

  GradCheckReport pool() const {
    return repeat("maxpool routing", [&](Rng& rng) {
      const std::size_t pt = detail::between(rng, 1, 2), pf = detail::between(rng, 1, 3);
      const bool trunc = rng.index(2) == 1;
      const std::size_t t = pt * detail::between(rng, 1, 3) + (trunc ? rng.index(pt) : 0);
      const std::size_t f = pf * detail::between(rng, 1, 3) + (trunc ? rng.index(pf) : 0);
      const PoolParams p{pt, pf, trunc};
      const Tensor x = detail::separated_tensor({detail::between(rng, 1, 2), t, f}, 1e-2, rng);
      const Tensor r = uniform_tensor(pooled_shape(x.shape(), p), -1, 1, rng);
      return grad_check("pool", [&](const Tensor& z) {
        auto res = maxpool_forward(z, p);
        return std::pair{detail::dot(r, res.output), maxpool_backward(res.index_map, r)};
      }, x, opt_.tolerance);
    });
  }

  std::vector<GradCheckReport> fc() const {
    const GradCheckReport in = repeat("fc (input)", [&](Rng& rng) {
      const std::size_t n = detail::between(rng, 2, 9), m = detail::between(rng, 1, 6);
      const Tensor w = uniform_tensor({m, n}, -1, 1, rng), b = uniform_tensor({m}, -1, 1, rng);
      const Tensor x = uniform_tensor({n}, -1, 1, rng), r = uniform_tensor({m}, -1, 1, rng);
      return grad_check("fc", [&](const Tensor& z) {
        return std::pair{detail::dot(r, fc_forward(z, w, b)), fc_backward(z, w, r).input};
      }, x, opt_.tolerance);
    });
    const GradCheckReport wt = repeat("fc (weight)", [&](Rng& rng) {
      const std::size_t n = detail::between(rng, 2, 9), m = detail::between(rng, 1, 6);
      const Tensor w = uniform_tensor({m, n}, -1, 1, rng), b = uniform_tensor({m}, -1, 1, rng);
      const Tensor x = uniform_tensor({n}, -1, 1, rng), r = uniform_tensor({m}, -1, 1, rng);
      return grad_check("fc", [&](const Tensor& z) {
        return std::pair{detail::dot(r, fc_forward(x, z, b)), fc_backward(x, z, r).weight};
      }, w, opt_.tolerance);
    });
    return {in, wt};
  }

  GradCheckReport relu() const {
    return repeat("relu", [&](Rng& rng) {
      Tensor x = uniform_tensor({detail::between(rng, 2, 12)}, -1, 1, rng);
      for (auto& v : x.values())
        if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
      const Tensor r = uniform_tensor(x.shape(), -1, 1, rng);
      return grad_check("relu", [&](const Tensor& z) {
        return std::pair{detail::dot(r, relu_forward(z)), relu_backward(z, r)};
      }, x, opt_.tolerance);
    });
  }

  GradCheckReport sigmoid_op() const {
    return repeat("sigmoid", [&](Rng& rng) {
      const Tensor x = uniform_tensor({detail::between(rng, 2, 12)}, -4, 4, rng);
      const Tensor r = uniform_tensor(x.shape(), -1, 1, rng);
      return grad_check("sigmoid", [&](const Tensor& z) {
        return std::pair{detail::dot(r, sigmoid_forward(z)), sigmoid_backward(sigmoid_forward(z), r)};
      }, x, opt_.tolerance);
    });
  }

  GradCheckReport softmax() const {
    return repeat("softmax-ce", [&](Rng& rng) {
      const std::size_t k = detail::between(rng, 2, 10);
      const Tensor x = uniform_tensor({k}, -5, 5, rng);
      const std::size_t label = rng.index(k);
      return grad_check("softmax-ce", [&](const Tensor& z) {
        auto ce = softmax_ce(z, label);
        return std::pair{ce.loss, ce.grad};
      }, x, opt_.tolerance);
    });
  }

  // conv -> relu -> pool -> flatten -> fc -> sigmoid -> fc(out) -> softmax-CE,
  // checked with respect to every parameter.
  GradCheckReport chain() const {
    return repeat("conv-relu-pool-fc chain", [&](Rng& rng) {
      ArchitectureSpec s;
      s.name = "chain";
      s.family = Family::kCnn;
      s.input_shape = {1, 4, 6};
      s.n_states = 3;
      s.layers = {LayerSpec::conv(2, 3, 3, 1, 1), LayerSpec::of(LayerKind::kRelu), LayerSpec::pool(2, 2),
                  LayerSpec::of(LayerKind::kFlatten), LayerSpec::fc(4), LayerSpec::of(LayerKind::kSigmoid)};
      FeedForwardNet net(s, rng.next());
      FrameSample smp{uniform_tensor(s.input_shape, -1, 1, rng), {}, static_cast<std::uint32_t>(rng.index(3))};
      return model_check("chain", net, smp);
    });
  }

  GradCheckReport lstmp(bool peephole) const {
    return repeat(peephole ? "lstmp cell, peephole, 4 steps" : "lstmp cell, 4 steps", [&](Rng& rng) {
      LstmpConfig cfg{2, 3, 2, 2, 3, peephole};
      LstmpModel m(cfg, rng.next());
      if (peephole)
        for (auto& l : m.layers())
          for (Tensor* p : {&l.peep_i, &l.peep_f, &l.peep_o}) *p = uniform_tensor(p->shape(), -0.5, 0.5, rng);
      SequenceExample ex{"g", uniform_tensor({4, 2}, -1, 1, rng), {}};
      for (int t = 0; t < 4; ++t) ex.labels.push_back(static_cast<std::uint32_t>(rng.index(3)));
      const auto ps = m.parameters();
      const Tensor point = detail::flatten_params(std::as_const(m).parameters());
      return grad_check("lstmp", [&](const Tensor& z) {
        detail::scatter_params(z, ps);
        auto grads = zeros_like(std::as_const(m).parameters());
        const double loss = sequence_gradient(m, ex, 4, 0, grads);
        return std::pair{loss, detail::flatten_grads(grads)};
      }, point, opt_.tolerance);
    });
  }

  GradCheckReport joint() const {
    return repeat("joint network end to end", [&](Rng& rng) {
      ArchitectureSpec s;
      s.name = "joint-chain";
      s.family = Family::kVdcnn;
      s.input_shape = {1, 3, 4};
      s.n_states = 3;
      s.layers = {LayerSpec::conv(2, 3, 3, 1, 1), LayerSpec::of(LayerKind::kRelu), LayerSpec::pool(1, 2),
                  LayerSpec::of(LayerKind::kFlatten), LayerSpec::of(LayerKind::kConcatAux), LayerSpec::fc(4),
                  LayerSpec::of(LayerKind::kRelu)};
      JointNetwork net(JointSpec{s, 3, 2}, rng.next());
      FrameSample smp{uniform_tensor(s.input_shape, -1, 1, rng), uniform_tensor({3}, -1, 1, rng).values(),
                      static_cast<std::uint32_t>(rng.index(3))};
      return model_check("joint", net, smp);
    });
  }

  template <class Model>
  GradCheckReport model_check(const std::string& name, Model& net, const FrameSample& smp) const {
    const auto ps = net.parameters();
    const Tensor point = detail::flatten_params(std::as_const(net).parameters());
    return grad_check(name, [&](const Tensor& z) {
      detail::scatter_params(z, ps);
      auto grads = zeros_like(std::as_const(net).parameters());
      const double loss = net.accumulate(smp, grads);
      return std::pair{loss, detail::flatten_grads(grads)};
    }, point, opt_.tolerance);
  }

  GradSuiteOptions opt_;
};

inline std::string format_grad_reports(const std::vector<GradCheckReport>& rs) {
  std::string out;
  char buf[160];
  for (const auto& r : rs) {
    std::snprintf(buf, sizeof buf, "%-34s max_rel_error %.3e  %s\n", r.op_name.c_str(), r.max_rel_error,
                  r.passed ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace vdcnn

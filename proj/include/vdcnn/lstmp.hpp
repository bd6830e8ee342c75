// SPDX-License-Identifier: Apache-2.0
//
// LSTM with a recurrent projection layer (LSTMP), stacked, with truncated
// BPTT training. Gate layout in the stacked weight matrix is [i, f, g, o]
// over the input [x; r_prev]:
//
//   i = sigm(W_i z + b_i + p_i . c_prev)      f = sigm(W_f z + b_f + p_f . c_prev)
//   g = tanh(W_g z + b_g)                     c = f . c_prev + i . g
//   o = sigm(W_o z + b_o + p_o . c)           r = P (o . tanh(c))
//
// Peephole terms are present only when enabled.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vdcnn/errors.hpp"
#include "vdcnn/ops.hpp"
#include "vdcnn/random.hpp"
#include "vdcnn/tensor.hpp"

namespace vdcnn {

struct LstmpConfig {
  std::size_t input_dim = 40;
  std::size_t cell_dim = 64;
  std::size_t proj_dim = 32;
  std::size_t layers = 3;
  std::size_t n_states = 16;
  bool peephole = false;
};

struct LstmpLayerParams {
  std::size_t input_dim = 0, cell_dim = 0, proj_dim = 0;
  bool peephole = false;
  Tensor gates;       // (4 cell, input + proj)
  Tensor gate_bias;   // (4 cell); forget block starts at 1
  Tensor peep_i, peep_f, peep_o;  // (cell), peephole only
  Tensor projection;  // (proj, cell)

  static LstmpLayerParams init(std::size_t input_dim, std::size_t cell_dim, std::size_t proj_dim,
                               bool peephole, Rng& rng) {
    if (!(proj_dim < cell_dim)) throw DimensionError("LSTMP needs proj_dim < cell_dim");
    LstmpLayerParams p;
    p.input_dim = input_dim;
    p.cell_dim = cell_dim;
    p.proj_dim = proj_dim;
    p.peephole = peephole;
    const std::size_t z = input_dim + proj_dim;
    p.gates = glorot_uniform({4 * cell_dim, z}, z, cell_dim, rng);
    p.gate_bias = Tensor({4 * cell_dim});
    for (std::size_t j = 0; j < cell_dim; ++j) p.gate_bias[cell_dim + j] = 1.0;
    if (peephole) {
      p.peep_i = Tensor({cell_dim});
      p.peep_f = Tensor({cell_dim});
      p.peep_o = Tensor({cell_dim});
    }
    p.projection = glorot_uniform({proj_dim, cell_dim}, cell_dim, proj_dim, rng);
    return p;
  }

  ParamRefs parameters() {
    ParamRefs out{&gates, &gate_bias};
    if (peephole) {
      out.push_back(&peep_i);
      out.push_back(&peep_f);
      out.push_back(&peep_o);
    }
    out.push_back(&projection);
    return out;
  }
  std::size_t parameter_tensors() const { return peephole ? 6 : 3; }
};

/// Everything one step needs for its backward pass.
struct LstmpStepCache {
  std::vector<double> z, i, f, g, o, c_prev, c, tanh_c, m;
};

struct LstmpStepOutput {
  std::vector<double> h;  // projected recurrent output (proj_dim)
  std::vector<double> c;  // cell state (cell_dim)
};

namespace detail {

// y += A x, A is (rows, cols) row-major.
inline void gemv_add(const Tensor& a, const double* x, double* y) {
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const double* w = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* wr = w + r * cols;
    for (std::size_t k = 0; k < cols; ++k) acc += wr[k] * x[k];
    y[r] += acc;
  }
}

// y += A^T x.
inline void gemv_t_add(const Tensor& a, const double* x, double* y) {
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const double* w = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = x[r];
    const double* wr = w + r * cols;
    for (std::size_t k = 0; k < cols; ++k) y[k] += wr[k] * xr;
  }
}

// G += x y^T.
inline void outer_add(Tensor& g, const double* x, const double* y) {
  const std::size_t rows = g.dim(0), cols = g.dim(1);
  double* d = g.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = x[r];
    double* dr = d + r * cols;
    for (std::size_t k = 0; k < cols; ++k) dr[k] += xr * y[k];
  }
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw DivergenceError(std::string("non-finite ") + what);
}

}  // namespace detail

inline LstmpStepOutput lstmp_step(const LstmpLayerParams& p, std::span<const double> x,
                                  std::span<const double> h_prev, std::span<const double> c_prev,
                                  LstmpStepCache* cache = nullptr) {
  const std::size_t C = p.cell_dim, P = p.proj_dim, I = p.input_dim;
  if (x.size() != I || h_prev.size() != P || c_prev.size() != C)
    throw DimensionError("lstmp_step: expected x " + std::to_string(I) + ", h " +
                         std::to_string(P) + ", c " + std::to_string(C));
  LstmpStepCache local;
  LstmpStepCache& k = cache ? *cache : local;
  k.z.assign(x.begin(), x.end());
  k.z.insert(k.z.end(), h_prev.begin(), h_prev.end());
  std::vector<double> a(p.gate_bias.values());
  detail::gemv_add(p.gates, k.z.data(), a.data());

  k.i.resize(C);
  k.f.resize(C);
  k.g.resize(C);
  k.o.resize(C);
  k.c.resize(C);
  k.tanh_c.resize(C);
  k.m.resize(C);
  k.c_prev.assign(c_prev.begin(), c_prev.end());
  for (std::size_t j = 0; j < C; ++j) {
    double ai = a[j], af = a[C + j];
    if (p.peephole) {
      ai += p.peep_i[j] * c_prev[j];
      af += p.peep_f[j] * c_prev[j];
    }
    k.i[j] = sigmoid(ai);
    k.f[j] = sigmoid(af);
    k.g[j] = std::tanh(a[2 * C + j]);
    k.c[j] = k.f[j] * c_prev[j] + k.i[j] * k.g[j];
    double ao = a[3 * C + j];
    if (p.peephole) ao += p.peep_o[j] * k.c[j];
    k.o[j] = sigmoid(ao);
    k.tanh_c[j] = std::tanh(k.c[j]);
    k.m[j] = k.o[j] * k.tanh_c[j];
  }
  LstmpStepOutput out{std::vector<double>(P, 0.0), k.c};
  detail::gemv_add(p.projection, k.m.data(), out.h.data());
  detail::require_finite(out.c, "LSTMP cell state");
  detail::require_finite(out.h, "LSTMP output");
  return out;
}

/// Backward through one step. dh and dc are the total gradients arriving at
/// this step's outputs; grads are accumulated in parameters() order. Returns
/// (dx, dh_prev, dc_prev).
struct LstmpStepGrads {
  std::vector<double> dx, dh_prev, dc_prev;
};

inline LstmpStepGrads lstmp_step_backward(const LstmpLayerParams& p, const LstmpStepCache& k,
                                          std::span<const double> dh, std::span<const double> dc_in,
                                          std::span<Tensor> grads) {
  const std::size_t C = p.cell_dim, I = p.input_dim;
  Tensor& g_gates = grads[0];
  Tensor& g_bias = grads[1];
  Tensor& g_proj = grads[p.peephole ? 5 : 2];

  detail::outer_add(g_proj, dh.data(), k.m.data());
  std::vector<double> dm(C, 0.0);
  detail::gemv_t_add(p.projection, dh.data(), dm.data());

  std::vector<double> da(4 * C);
  LstmpStepGrads out;
  out.dc_prev.resize(C);
  for (std::size_t j = 0; j < C; ++j) {
    const double dao = dm[j] * k.tanh_c[j] * k.o[j] * (1.0 - k.o[j]);
    double dc = dc_in[j] + dm[j] * k.o[j] * (1.0 - k.tanh_c[j] * k.tanh_c[j]);
    if (p.peephole) dc += dao * p.peep_o[j];
    const double daf = dc * k.c_prev[j] * k.f[j] * (1.0 - k.f[j]);
    const double dai = dc * k.g[j] * k.i[j] * (1.0 - k.i[j]);
    const double dag = dc * k.i[j] * (1.0 - k.g[j] * k.g[j]);
    da[j] = dai;
    da[C + j] = daf;
    da[2 * C + j] = dag;
    da[3 * C + j] = dao;
    out.dc_prev[j] = dc * k.f[j];
    if (p.peephole) {
      out.dc_prev[j] += dai * p.peep_i[j] + daf * p.peep_f[j];
      grads[2][j] += dai * k.c_prev[j];
      grads[3][j] += daf * k.c_prev[j];
      grads[4][j] += dao * k.c[j];
    }
  }
  detail::outer_add(g_gates, da.data(), k.z.data());
  for (std::size_t j = 0; j < 4 * C; ++j) g_bias[j] += da[j];
  std::vector<double> dz(k.z.size(), 0.0);
  detail::gemv_t_add(p.gates, da.data(), dz.data());
  out.dx.assign(dz.begin(), dz.begin() + static_cast<std::ptrdiff_t>(I));
  out.dh_prev.assign(dz.begin() + static_cast<std::ptrdiff_t>(I), dz.end());
  return out;
}

/// Recurrent state carried across chunks: per layer (r, c).
struct LstmpState {
  std::vector<std::vector<double>> h, c;
};

struct LstmpChunkCache {
  std::vector<std::vector<LstmpStepCache>> steps;  // [layer][t]
  std::vector<std::vector<double>> top;            // top-layer outputs per t
};

/// Stack of LSTMP layers followed by an affine output layer.
class LstmpModel {
 public:
  LstmpModel() = default;

  LstmpModel(const LstmpConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.layers < 1) throw DimensionError("LSTMP stack needs at least one layer");
    Rng rng(seed);
    std::size_t in = cfg.input_dim;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      layers_.push_back(LstmpLayerParams::init(in, cfg.cell_dim, cfg.proj_dim, cfg.peephole, rng));
      in = cfg.proj_dim;
    }
    out_w_ = glorot_uniform({cfg.n_states, cfg.proj_dim}, cfg.proj_dim, cfg.n_states, rng);
    out_b_ = Tensor({cfg.n_states});
  }

  const LstmpConfig& config() const { return cfg_; }
  std::size_t n_states() const { return cfg_.n_states; }
  const std::vector<LstmpLayerParams>& layers() const { return layers_; }
  std::vector<LstmpLayerParams>& layers() { return layers_; }

  LstmpState initial_state() const {
    LstmpState s;
    for (const auto& l : layers_) {
      s.h.emplace_back(l.proj_dim, 0.0);
      s.c.emplace_back(l.cell_dim, 0.0);
    }
    return s;
  }

  /// Forward a (steps x input_dim) chunk from `state`, which is advanced in
  /// place. Returns (steps x n_states) logits.
  Tensor forward(const Tensor& x, LstmpState& state, LstmpChunkCache* cache = nullptr) const {
    if (x.rank() != 2 || x.dim(1) != cfg_.input_dim)
      throw DimensionError("LSTMP input must be (steps, " + std::to_string(cfg_.input_dim) +
                           "), got " + shape_string(x.shape()));
    const std::size_t steps = x.dim(0);
    std::vector<std::vector<double>> cur(steps);
    for (std::size_t t = 0; t < steps; ++t)
      cur[t].assign(x.values().begin() + static_cast<std::ptrdiff_t>(t * cfg_.input_dim),
                    x.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * cfg_.input_dim));
    if (cache) {
      cache->steps.assign(layers_.size(), std::vector<LstmpStepCache>(steps));
      cache->top.clear();
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      for (std::size_t t = 0; t < steps; ++t) {
        auto o = lstmp_step(layers_[l], cur[t], state.h[l], state.c[l],
                            cache ? &cache->steps[l][t] : nullptr);
        state.h[l] = o.h;
        state.c[l] = std::move(o.c);
        cur[t] = std::move(o.h);
      }
    }
    Tensor logits({steps, cfg_.n_states});
    for (std::size_t t = 0; t < steps; ++t) {
      double* dst = logits.data().data() + t * cfg_.n_states;
      std::copy(out_b_.values().begin(), out_b_.values().end(), dst);
      detail::gemv_add(out_w_, cur[t].data(), dst);
    }
    if (cache) cache->top = std::move(cur);
    return logits;
  }

  /// Backward over one cached chunk. Gradient into the carried-in state is
  /// dropped (truncation at the chunk boundary). Returns d(loss)/dx.
  Tensor backward(const LstmpChunkCache& cache, const Tensor& dlogits,
                  std::vector<Tensor>& grads) const {
    const std::size_t steps = dlogits.dim(0);
    const std::size_t out_slot = grads.size() - 2;
    std::vector<std::vector<double>> d(steps, std::vector<double>(cfg_.proj_dim, 0.0));
    for (std::size_t t = 0; t < steps; ++t) {
      const double* dy = dlogits.data().data() + t * cfg_.n_states;
      detail::outer_add(grads[out_slot], dy, cache.top[t].data());
      for (std::size_t s = 0; s < cfg_.n_states; ++s) grads[out_slot + 1][s] += dy[s];
      detail::gemv_t_add(out_w_, dy, d[t].data());
    }
    std::size_t slot = 0;
    std::vector<std::size_t> offsets;
    for (const auto& l : layers_) {
      offsets.push_back(slot);
      slot += l.parameter_tensors();
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& p = layers_[l];
      std::vector<double> dh_rec(p.proj_dim, 0.0), dc_rec(p.cell_dim, 0.0);
      std::vector<std::vector<double>> dx(steps);
      std::span<Tensor> g(grads.data() + offsets[l], p.parameter_tensors());
      for (std::size_t t = steps; t-- > 0;) {
        std::vector<double> dh = d[t];
        for (std::size_t j = 0; j < p.proj_dim; ++j) dh[j] += dh_rec[j];
        auto r = lstmp_step_backward(p, cache.steps[l][t], dh, dc_rec, g);
        dh_rec = std::move(r.dh_prev);
        dc_rec = std::move(r.dc_prev);
        dx[t] = std::move(r.dx);
      }
      d = std::move(dx);
    }
    Tensor out({steps, cfg_.input_dim});
    for (std::size_t t = 0; t < steps; ++t)
      std::copy(d[t].begin(), d[t].end(),
                out.values().begin() + static_cast<std::ptrdiff_t>(t * cfg_.input_dim));
    return out;
  }

  ParamRefs parameters() {
    ParamRefs out;
    for (auto& l : layers_)
      for (Tensor* p : l.parameters()) out.push_back(p);
    out.push_back(&out_w_);
    out.push_back(&out_b_);
    return out;
  }
  ConstParamRefs parameters() const {
    ConstParamRefs out;
    for (Tensor* p : const_cast<LstmpModel*>(this)->parameters()) out.push_back(p);
    return out;
  }

 private:
  LstmpConfig cfg_;
  std::vector<LstmpLayerParams> layers_;
  Tensor out_w_, out_b_;
};

// ---------------------------------------------------------------------------
// Sequences, output delay and truncated BPTT

struct BpttConfig {
  std::size_t chunk = 20;
  std::size_t parallel_utterances = 40;
  double clip_lo = -1.0;
  double clip_hi = 1.0;
  bool clip = true;
  std::size_t output_delay = 5;
};

struct SequenceExample {
  std::string id;
  Tensor frames;  // (T, input_dim)
  std::vector<std::uint32_t> labels;
};

/// Slices rows [begin, begin + n) of a (T, D) matrix.
inline Tensor row_slice(const Tensor& m, std::size_t begin, std::size_t n) {
  const std::size_t d = m.dim(1);
  return Tensor({n, d}, std::vector<double>(m.values().begin() + static_cast<std::ptrdiff_t>(begin * d),
                                            m.values().begin() + static_cast<std::ptrdiff_t>((begin + n) * d)));
}

/// Runs a sequence through the stack chunk by chunk with state carried
/// across chunk boundaries. The result does not depend on `chunk`.
inline Tensor forward_sequence(const LstmpModel& model, const Tensor& frames, std::size_t chunk) {
  if (frames.rank() != 2) throw DimensionError("sequence must be (T, D)");
  if (chunk < 1) throw DomainError("chunk must be >= 1");
  const std::size_t T = frames.dim(0);
  LstmpState state = model.initial_state();
  Tensor out({T, model.n_states()});
  for (std::size_t b = 0; b < T; b += chunk) {
    const std::size_t n = std::min(chunk, T - b);
    const Tensor y = model.forward(row_slice(frames, b, n), state);
    std::copy(y.values().begin(), y.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(b * model.n_states()));
  }
  return out;
}

/// Appends `delay` copies of the last frame so every label gets an output.
inline Tensor delay_pad(const Tensor& frames, std::size_t delay) {
  const std::size_t T = frames.dim(0), D = frames.dim(1);
  std::vector<double> v(frames.values());
  for (std::size_t k = 0; k < delay; ++k)
    v.insert(v.end(), frames.values().end() - static_cast<std::ptrdiff_t>(D), frames.values().end());
  return Tensor({T + delay, D}, std::move(v));
}

/// Output t is trained on label t - delay; the first `delay` outputs reuse
/// label 0.
inline std::vector<std::uint32_t> delayed_targets(const std::vector<std::uint32_t>& labels,
                                                  std::size_t delay) {
  std::vector<std::uint32_t> out;
  for (std::size_t t = 0; t < labels.size() + delay; ++t)
    out.push_back(labels[t < delay ? 0 : t - delay]);
  return out;
}

/// Per-frame logits aligned with the input frames (row u scores frame u),
/// obtained by reading the output `delay` steps later.
inline Tensor frame_logits(const LstmpModel& model, const Tensor& frames, std::size_t delay,
                           std::size_t chunk = 20) {
  const Tensor raw = forward_sequence(model, delay_pad(frames, delay), chunk);
  return row_slice(raw, delay, frames.dim(0));
}

/// Appends the same i-vector to every frame: (T, D) -> (T, D + |ivector|).
inline Tensor speaker_aware_input(const Tensor& frames, std::span<const double> ivector) {
  const std::size_t T = frames.dim(0), D = frames.dim(1), V = ivector.size();
  Tensor out({T, D + V});
  for (std::size_t t = 0; t < T; ++t) {
    auto dst = out.values().begin() + static_cast<std::ptrdiff_t>(t * (D + V));
    std::copy_n(frames.values().begin() + static_cast<std::ptrdiff_t>(t * D), D, dst);
    std::copy(ivector.begin(), ivector.end(), dst + static_cast<std::ptrdiff_t>(D));
  }
  return out;
}

/// Summed CE over the delayed targets of one padded sequence and its
/// parameter gradient, truncated every `chunk` steps. No update is made.
inline double sequence_gradient(const LstmpModel& model, const SequenceExample& ex,
                                std::size_t chunk, std::size_t delay, std::vector<Tensor>& grads) {
  const Tensor x = delay_pad(ex.frames, delay);
  const auto targets = delayed_targets(ex.labels, delay);
  LstmpState state = model.initial_state();
  double loss = 0.0;
  for (std::size_t b = 0; b < x.dim(0); b += chunk) {
    const std::size_t n = std::min(chunk, x.dim(0) - b);
    LstmpChunkCache cache;
    const Tensor y = model.forward(row_slice(x, b, n), state, &cache);
    Tensor dy(y.shape());
    for (std::size_t t = 0; t < n; ++t) {
      auto ce = softmax_ce(row_slice(y, t, 1).flattened(), targets[b + t]);
      loss += ce.loss;
      std::copy(ce.grad.values().begin(), ce.grad.values().end(),
                dy.values().begin() + static_cast<std::ptrdiff_t>(t * y.dim(1)));
    }
    model.backward(cache, dy, grads);
  }
  return loss;
}

/// Mean per-output CE over a corpus (delayed targets, padded sequences).
inline double sequence_ce(const LstmpModel& model, const std::vector<SequenceExample>& corpus,
                          std::size_t delay, std::size_t chunk = 20) {
  double loss = 0.0;
  std::size_t n = 0;
  for (const auto& ex : corpus) {
    const Tensor y = forward_sequence(model, delay_pad(ex.frames, delay), chunk);
    const auto targets = delayed_targets(ex.labels, delay);
    for (std::size_t t = 0; t < y.dim(0); ++t, ++n)
      loss -= log_softmax(row_slice(y, t, 1).flattened())[targets[t]];
  }
  return n ? loss / static_cast<double>(n) : 0.0;
}

struct TbpttOptions {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
};

struct TbpttStats {
  std::vector<double> epoch_ce;  // [0] before training, then one per epoch
  double max_applied_gradient = 0.0;
  std::size_t updates = 0;
};

/// Streams of `parallel_utterances` sequences advance chunk by chunk in
/// lockstep; each chunk step sums the stream gradients in stream order,
/// normalises by the frame count, clips elementwise, and applies one
/// momentum-SGD update. Hidden state crosses chunk boundaries, gradients do
/// not.
inline TbpttStats train_tbptt(LstmpModel& model, const std::vector<SequenceExample>& corpus,
                              const BpttConfig& bptt, const TbpttOptions& opt,
                              const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (bptt.chunk < 1) throw DomainError("chunk must be >= 1");
  if (!(bptt.clip_lo < bptt.clip_hi)) throw DomainError("clip_lo must be < clip_hi");
  for (const auto& ex : corpus)
    if (ex.labels.size() != ex.frames.dim(0))
      throw DataError("sequence " + ex.id + " lacks frame labels");
  TbpttStats stats;
  stats.epoch_ce.push_back(sequence_ce(model, corpus, bptt.output_delay, bptt.chunk));
  if (on_epoch) on_epoch(0, stats.epoch_ce.back());

  SgdMomentum sgd(opt.learning_rate, opt.momentum);
  Rng rng(opt.seed);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t streams = std::max<std::size_t>(1, bptt.parallel_utterances);

  std::vector<Tensor> inputs(corpus.size());
  std::vector<std::vector<std::uint32_t>> targets(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    inputs[i] = delay_pad(corpus[i].frames, bptt.output_delay);
    targets[i] = delayed_targets(corpus[i].labels, bptt.output_delay);
  }

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += streams) {
      const std::size_t nb = std::min(streams, order.size() - b);
      std::vector<LstmpState> states(nb, model.initial_state());
      std::size_t longest = 0;
      for (std::size_t s = 0; s < nb; ++s) longest = std::max(longest, inputs[order[b + s]].dim(0));
      for (std::size_t start = 0; start < longest; start += bptt.chunk) {
        auto grads = zeros_like(std::as_const(model).parameters());
        std::size_t frames = 0;
        for (std::size_t s = 0; s < nb; ++s) {
          const std::size_t u = order[b + s];
          const std::size_t T = inputs[u].dim(0);
          if (start >= T) continue;
          const std::size_t n = std::min(bptt.chunk, T - start);
          LstmpChunkCache cache;
          const Tensor y = model.forward(row_slice(inputs[u], start, n), states[s], &cache);
          Tensor dy(y.shape());
          for (std::size_t t = 0; t < n; ++t) {
            auto ce = softmax_ce(row_slice(y, t, 1).flattened(), targets[u][start + t]);
            if (!std::isfinite(ce.loss))
              throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch));
            std::copy(ce.grad.values().begin(), ce.grad.values().end(),
                      dy.values().begin() + static_cast<std::ptrdiff_t>(t * y.dim(1)));
          }
          model.backward(cache, dy, grads);
          frames += n;
        }
        for (auto& g : grads) {
          g *= 1.0 / static_cast<double>(frames);
          if (bptt.clip) clip_gradient_inplace(g, bptt.clip_lo, bptt.clip_hi);
          stats.max_applied_gradient = std::max(stats.max_applied_gradient, g.max_abs());
        }
        sgd.step(model.parameters(), grads);
        ++stats.updates;
      }
    }
    stats.epoch_ce.push_back(sequence_ce(model, corpus, bptt.output_delay, bptt.chunk));
    if (!std::isfinite(stats.epoch_ce.back()))
      throw DivergenceError("training CE became non-finite in epoch " + std::to_string(epoch));
    if (on_epoch) on_epoch(epoch, stats.epoch_ce.back());
  }
  return stats;
}

}  // namespace vdcnn

// Direct-formula reference implementations used by the test suites. These
// favour obviousness over speed.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "vdcnn/decoder.hpp"
#include "vdcnn/lstmp.hpp"
#include "vdcnn/ops.hpp"
#include "vdcnn/random.hpp"
#include "vdcnn/tensor.hpp"

namespace oracle {

using vdcnn::Tensor;

// Cross-correlation with symmetric zero padding, accumulated in the order
// (map, dt, df) per output value, then the bias.
inline Tensor conv2d(const Tensor& x, const vdcnn::ConvParams& p) {
  const std::size_t M = x.dim(0), T = x.dim(1), F = x.dim(2);
  const std::size_t O = p.filter.dim(0), KT = p.filter.dim(2), KF = p.filter.dim(3);
  const std::size_t To = T + 2 * p.pad_t - KT + 1, Fo = F + 2 * p.pad_f - KF + 1;
  Tensor y({O, To, Fo});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t f = 0; f < Fo; ++f) {
        double acc = 0.0;
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t dt = 0; dt < KT; ++dt)
            for (std::size_t df = 0; df < KF; ++df) {
              const long it = static_cast<long>(t + dt) - static_cast<long>(p.pad_t);
              const long jf = static_cast<long>(f + df) - static_cast<long>(p.pad_f);
              const double v = (it < 0 || jf < 0 || it >= static_cast<long>(T) || jf >= static_cast<long>(F))
                                   ? 0.0
                                   : x.at(m, static_cast<std::size_t>(it), static_cast<std::size_t>(jf));
              acc += p.filter.at(o, m, dt, df) * v;
            }
        y.at(o, t, f) = acc + p.bias[o];
      }
  return y;
}

inline Tensor maxpool(const Tensor& x, std::size_t pt, std::size_t pf) {
  const std::size_t M = x.dim(0), To = x.dim(1) / pt, Fo = x.dim(2) / pf;
  Tensor y({M, To, Fo});
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t f = 0; f < Fo; ++f) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < pt; ++a)
          for (std::size_t b = 0; b < pf; ++b) best = std::max(best, x.at(m, t * pt + a, f * pf + b));
        y.at(m, t, f) = best;
      }
  return y;
}

inline std::vector<double> dct2_ortho(const std::vector<double>& x, std::size_t keep) {
  const std::size_t N = x.size();
  std::vector<double> c(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    double s = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      s += x[n] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(n) + 1.0) /
                           (2.0 * static_cast<double>(N)));
    c[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(N));
  }
  return c;
}

// Regression deltas over a (frames, dims) matrix with edge replication.
inline Tensor delta(const Tensor& x, std::size_t W) {
  const long T = static_cast<long>(x.dim(0));
  Tensor d(x.shape());
  double denom = 0.0;
  for (std::size_t k = 1; k <= W; ++k) denom += 2.0 * static_cast<double>(k * k);
  for (long t = 0; t < T; ++t)
    for (std::size_t j = 0; j < x.dim(1); ++j) {
      double num = 0.0;
      for (long k = 1; k <= static_cast<long>(W); ++k) {
        const long a = std::min(T - 1, t + k), b = std::max(0L, t - k);
        num += static_cast<double>(k) * (x.at(static_cast<std::size_t>(a), j) - x.at(static_cast<std::size_t>(b), j));
      }
      d.at(static_cast<std::size_t>(t), j) = num / denom;
    }
  return d;
}

// Exponential recursion; only for short sequences.
template <class T>
std::size_t edit_distance(const std::vector<T>& a, std::size_t i, const std::vector<T>& b, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t sub = edit_distance(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1);
  const std::size_t del = edit_distance(a, i + 1, b, j) + 1;
  const std::size_t ins = edit_distance(a, i, b, j + 1) + 1;
  return std::min({sub, del, ins});
}

template <class T>
std::size_t edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  return edit_distance(a, 0, b, 0);
}

struct BestPath {
  std::vector<std::uint32_t> path;
  double score = -std::numeric_limits<double>::infinity();
};

// Enumerates all n^T paths in lexicographic order; keeps the first strict
// maximum.
inline BestPath enumerate_paths(const Tensor& scores, const Tensor& log_trans) {
  const std::size_t T = scores.dim(0), n = scores.dim(1);
  std::vector<std::uint32_t> p(T, 0);
  BestPath best;
  while (true) {
    double s = scores.at(0, p[0]);
    for (std::size_t t = 1; t < T; ++t) s += log_trans.at(p[t - 1], p[t]) + scores.at(t, p[t]);
    if (s > best.score) {
      best.score = s;
      best.path = p;
    }
    std::size_t k = T;
    while (k > 0 && p[k - 1] + 1 == n) p[--k] = 0;
    if (k == 0) break;
    ++p[k - 1];
  }
  return best;
}

// Untruncated backpropagation through time written directly against the
// single-step primitives; gradients in model.parameters() order.
inline std::vector<Tensor> full_bptt(const vdcnn::LstmpModel& model, const Tensor& x,
                              const std::vector<std::uint32_t>& targets) {
  const auto& cfg = model.config();
  const std::size_t T = x.dim(0), L = cfg.layers;
  const auto params = model.parameters();
  auto grads = vdcnn::zeros_like(params);
  std::vector<std::vector<vdcnn::LstmpStepCache>> caches(L, std::vector<vdcnn::LstmpStepCache>(T));
  std::vector<std::vector<double>> in(T);
  for (std::size_t t = 0; t < T; ++t)
    in[t].assign(x.values().begin() + static_cast<std::ptrdiff_t>(t * x.dim(1)),
                 x.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * x.dim(1)));
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<double> h(cfg.proj_dim, 0.0), c(cfg.cell_dim, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      auto out = vdcnn::lstmp_step(model.layers()[l], in[t], h, c, &caches[l][t]);
      h = out.h;
      c = out.c;
      in[t] = out.h;
    }
  }
  const Tensor& W = *params[params.size() - 2];
  const Tensor& b = *params[params.size() - 1];
  Tensor& gW = grads[grads.size() - 2];
  Tensor& gb = grads[grads.size() - 1];
  std::vector<std::vector<double>> d(T, std::vector<double>(cfg.proj_dim, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    Tensor z({cfg.n_states});
    for (std::size_t s = 0; s < cfg.n_states; ++s) {
      z[s] = b[s];
      for (std::size_t k = 0; k < cfg.proj_dim; ++k) z[s] += W.at(s, k) * in[t][k];
    }
    const auto ce = vdcnn::softmax_ce(z, targets[t]);
    for (std::size_t s = 0; s < cfg.n_states; ++s) {
      gb[s] += ce.grad[s];
      for (std::size_t k = 0; k < cfg.proj_dim; ++k) {
        gW.at(s, k) += ce.grad[s] * in[t][k];
        d[t][k] += W.at(s, k) * ce.grad[s];
      }
    }
  }
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : model.layers()) {
    offsets.push_back(offset);
    offset += p.parameter_tensors();
  }
  for (std::size_t l = L; l-- > 0;) {
    const auto& p = model.layers()[l];
    std::vector<double> dh_rec(p.proj_dim, 0.0), dc_rec(p.cell_dim, 0.0);
    std::span<Tensor> g(grads.data() + offsets[l], p.parameter_tensors());
    for (std::size_t t = T; t-- > 0;) {
      std::vector<double> dh = d[t];
      for (std::size_t k = 0; k < dh.size(); ++k) dh[k] += dh_rec[k];
      auto r = vdcnn::lstmp_step_backward(p, caches[l][t], dh, dc_rec, g);
      dh_rec = std::move(r.dh_prev);
      dc_rec = std::move(r.dc_prev);
      d[t] = std::move(r.dx);
    }
  }
  return grads;
}

inline Tensor random_tensor(const vdcnn::Shape& s, vdcnn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  return vdcnn::uniform_tensor(s, lo, hi, rng);
}

}  // namespace oracle

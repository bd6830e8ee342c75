// SPDX-License-Identifier: Apache-2.0
//
// Joint training of a conv trunk over FBANK maps with a parallel fully
// connected stream over auxiliary features (MFCC / fMLLR / i-vector). The
// two stream outputs are concatenated ahead of the shared FC stack.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vdcnn/arch.hpp"
#include "vdcnn/archive.hpp"
#include "vdcnn/frontend.hpp"
#include "vdcnn/network.hpp"

namespace vdcnn {

struct JointSpec {
  ArchitectureSpec base;
  std::size_t aux_dim = 0;
  std::size_t aux_hidden = 512;
  std::size_t merge_after = 0;  // concatenation precedes the first shared FC layer
};

class JointNetwork {
 public:
  JointNetwork() = default;

  JointNetwork(JointSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    if (spec_.aux_dim < 1) throw DimensionError("joint network needs aux_dim >= 1");
    if (spec_.merge_after != 0)
      throw DomainError("auxiliary stream must merge before the first shared FC layer");
    const ArchitectureSpec& b = spec_.base;
    std::size_t flatten = b.layers.size();
    for (std::size_t i = 0; i < b.layers.size(); ++i)
      if (b.layers[i].kind == LayerKind::kFlatten) {
        flatten = i;
        break;
      }
    if (flatten == b.layers.size()) throw ShapeError(b.name + ": joint base needs a flatten layer");
    std::size_t head_begin = flatten + 1;
    if (head_begin < b.layers.size() && b.layers[head_begin].kind == LayerKind::kConcatAux)
      ++head_begin;
    for (std::size_t i = head_begin; i < b.layers.size(); ++i)
      if (b.layers[i].kind == LayerKind::kConcatAux)
        throw ShapeError(b.name + ": concat-aux must directly follow flatten");

    derive_shapes(strip_concat(b));
    Rng rng(seed);
    Shape shape = b.input_shape;
    detail::append_layers(trunk_, b, 0, flatten + 1, shape, rng);
    trunk_dim_ = shape[0];
    aux_.push(detail::make_fc(spec_.aux_dim, spec_.aux_hidden, rng));
    aux_.push(ReluLayer{});
    shape = {trunk_dim_ + spec_.aux_hidden};
    detail::append_layers(head_, b, head_begin, b.layers.size(), shape, rng);
    head_.push(detail::make_fc(shape_size(shape), b.n_states, rng));
  }

  const JointSpec& spec() const { return spec_; }
  std::size_t n_states() const { return spec_.base.n_states; }
  std::size_t trunk_dim() const { return trunk_dim_; }

  Tensor logits(const FrameSample& s) const {
    check(s);
    const Tensor a = trunk_.forward(s.maps);
    const Tensor u = aux_.forward(Tensor({s.aux.size()}, s.aux));
    return head_.forward(concat(a, u));
  }

  double accumulate(const FrameSample& s, std::vector<Tensor>& grads) const {
    check(s);
    Tape tt, ta, th;
    const Tensor a = trunk_.forward(s.maps, &tt);
    const Tensor u = aux_.forward(Tensor({s.aux.size()}, s.aux), &ta);
    const Tensor z = head_.forward(concat(a, u), &th);
    auto ce = softmax_ce(z, s.label);
    const std::size_t nt = trunk_.parameter_tensors(), na = aux_.parameter_tensors();
    const Tensor g = head_.backward(th, std::move(ce.grad), grads, nt + na);
    Tensor ga({trunk_dim_}), gu({spec_.aux_hidden});
    std::copy_n(g.values().begin(), trunk_dim_, ga.values().begin());
    std::copy(g.values().begin() + static_cast<std::ptrdiff_t>(trunk_dim_), g.values().end(),
              gu.values().begin());
    trunk_.backward(tt, std::move(ga), grads, 0);
    aux_.backward(ta, std::move(gu), grads, nt);
    return ce.loss;
  }

  /// trunk parameters, then aux-stream FC, then shared stack.
  ParamRefs parameters() {
    ParamRefs out = trunk_.parameters();
    for (Tensor* p : aux_.parameters()) out.push_back(p);
    for (Tensor* p : head_.parameters()) out.push_back(p);
    return out;
  }
  ConstParamRefs parameters() const {
    ConstParamRefs out;
    for (Tensor* p : const_cast<JointNetwork*>(this)->parameters()) out.push_back(p);
    return out;
  }

  LayerStack& trunk() { return trunk_; }
  LayerStack& aux_stream() { return aux_; }
  LayerStack& head() { return head_; }
  const LayerStack& head() const { return head_; }

 private:
  static ArchitectureSpec strip_concat(ArchitectureSpec s) {
    std::erase_if(s.layers, [](const LayerSpec& l) { return l.kind == LayerKind::kConcatAux; });
    return s;
  }

  void check(const FrameSample& s) const {
    if (s.maps.shape() != spec_.base.input_shape)
      throw DimensionError(spec_.base.name + " expects input " +
                           shape_string(spec_.base.input_shape) + ", got " +
                           shape_string(s.maps.shape()));
    if (s.aux.empty()) throw DataError("joint network requires an auxiliary vector");
    if (s.aux.size() != spec_.aux_dim)
      throw DimensionError("aux vector has length " + std::to_string(s.aux.size()) +
                           ", expected " + std::to_string(spec_.aux_dim));
  }

  JointSpec spec_;
  LayerStack trunk_, aux_, head_;
  std::size_t trunk_dim_ = 0;
};

inline JointNetwork build_joint(JointSpec spec, std::uint64_t seed) {
  return JointNetwork(std::move(spec), seed);
}

// ---------------------------------------------------------------------------
// Auxiliary feature loading

enum class AuxKind { kMfcc, kFmllr, kIvector, kFmllrIvector };

inline constexpr std::size_t kAuxContext = 11;
inline constexpr std::size_t kMfccDim = 39;
inline constexpr std::size_t kFmllrDim = 40;
inline constexpr std::size_t kIvectorDim = 100;

inline std::string aux_kind_name(AuxKind k) {
  switch (k) {
    case AuxKind::kMfcc: return "mfcc";
    case AuxKind::kFmllr: return "fmllr";
    case AuxKind::kIvector: return "ivector";
    case AuxKind::kFmllrIvector: return "fmllr+ivector";
  }
  return "?";
}

inline AuxKind parse_aux_kind(const std::string& s) {
  if (s == "mfcc") return AuxKind::kMfcc;
  if (s == "fmllr") return AuxKind::kFmllr;
  if (s == "ivector" || s == "ivec") return AuxKind::kIvector;
  if (s == "fmllr+ivector" || s == "fmllr+ivec") return AuxKind::kFmllrIvector;
  throw DataError("unknown auxiliary feature kind '" + s + "'");
}

/// Per-frame auxiliary width after windowing / repetition.
inline std::size_t aux_dimension(AuxKind k) {
  switch (k) {
    case AuxKind::kMfcc: return kMfccDim * kAuxContext;
    case AuxKind::kFmllr: return kFmllrDim * kAuxContext;
    case AuxKind::kIvector: return kIvectorDim;
    case AuxKind::kFmllrIvector: return kFmllrDim * kAuxContext + kIvectorDim;
  }
  return 0;
}

/// Archive kind tags, e.g. "aux:fmllr".
inline std::string aux_archive_kind(const std::string& raw) { return "aux:" + raw; }

namespace detail {

inline const Archive& archive_of_kind(std::span<const Archive> archives, const std::string& raw) {
  for (const Archive& a : archives)
    if (a.kind == aux_archive_kind(raw)) return a;
  throw DataError("no archive of kind " + aux_archive_kind(raw) + " supplied");
}

inline const ArchiveRecord& record_for(const Archive& a, const std::string& id) {
  const ArchiveRecord* r = a.find(id);
  if (!r) throw DataError("utterance '" + id + "' missing from " + a.kind + " archive");
  return *r;
}

inline Tensor windowed_stream(const ArchiveRecord& r, std::size_t frames, std::size_t dim) {
  if (r.frames != frames || r.dims != dim)
    throw DataError("aux record " + r.id + " is " + std::to_string(r.frames) + "x" +
                    std::to_string(r.dims) + ", expected " + std::to_string(frames) + "x" +
                    std::to_string(dim));
  const Tensor stream({frames, dim}, r.aux);
  Tensor out({frames, dim * kAuxContext});
  for (std::size_t t = 0; t < frames; ++t) {
    const auto w = window_frames(stream, t, kAuxContext);
    std::copy(w.begin(), w.end(), out.values().begin() + static_cast<std::ptrdiff_t>(t * w.size()));
  }
  return out;
}

}  // namespace detail

/// (frames x aux_dimension(kind)) matrix for one utterance. MFCC and fMLLR
/// streams are windowed over 11 frames; i-vectors repeat on every frame.
inline Tensor load_aux(std::span<const Archive> archives, AuxKind kind, const std::string& id,
                       std::size_t frames) {
  const auto ivector = [&]() {
    const ArchiveRecord& r = detail::record_for(detail::archive_of_kind(archives, "ivector"), id);
    if (r.frames != 0 || r.dims != kIvectorDim)
      throw DataError("i-vector record " + id + " must be a per-utterance " +
                      std::to_string(kIvectorDim) + "-dim vector");
    Tensor out({frames, kIvectorDim});
    for (std::size_t t = 0; t < frames; ++t)
      std::copy(r.aux.begin(), r.aux.end(),
                out.values().begin() + static_cast<std::ptrdiff_t>(t * kIvectorDim));
    return out;
  };
  switch (kind) {
    case AuxKind::kMfcc:
      return detail::windowed_stream(
          detail::record_for(detail::archive_of_kind(archives, "mfcc"), id), frames, kMfccDim);
    case AuxKind::kFmllr:
      return detail::windowed_stream(
          detail::record_for(detail::archive_of_kind(archives, "fmllr"), id), frames, kFmllrDim);
    case AuxKind::kIvector:
      return ivector();
    case AuxKind::kFmllrIvector: {
      const Tensor f = detail::windowed_stream(
          detail::record_for(detail::archive_of_kind(archives, "fmllr"), id), frames, kFmllrDim);
      const Tensor iv = ivector();
      const std::size_t df = f.dim(1), total = df + kIvectorDim;
      Tensor out({frames, total});
      for (std::size_t t = 0; t < frames; ++t) {
        auto dst = out.values().begin() + static_cast<std::ptrdiff_t>(t * total);
        std::copy_n(f.values().begin() + static_cast<std::ptrdiff_t>(t * df), df, dst);
        std::copy_n(iv.values().begin() + static_cast<std::ptrdiff_t>(t * kIvectorDim),
                    kIvectorDim, dst + static_cast<std::ptrdiff_t>(df));
      }
      return out;
    }
  }
  throw DataError("unhandled aux kind");
}

/// 39-dim MFCC stream (13 static + deltas + delta-deltas) from log-mel rows.
inline Tensor mfcc_stream(const Tensor& fbank, std::size_t delta_window = 2) {
  const Tensor c = compute_mfcc(fbank, 13);
  auto [d, dd] = compute_deltas(c, delta_window);
  const std::size_t frames = c.dim(0);
  Tensor out({frames, kMfccDim});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < 13; ++j) {
      out.at(t, j) = c.at(t, j);
      out.at(t, 13 + j) = d.at(t, j);
      out.at(t, 26 + j) = dd.at(t, j);
    }
  return out;
}

}  // namespace vdcnn

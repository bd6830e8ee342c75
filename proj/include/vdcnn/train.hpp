// SPDX-License-Identifier: Apache-2.0
//
// Frame datasets, minibatch SGD for frame classifiers, and checkpoints.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vdcnn/archive.hpp"
#include "vdcnn/corpus.hpp"
#include "vdcnn/errors.hpp"
#include "vdcnn/frontend.hpp"
#include "vdcnn/joint.hpp"
#include "vdcnn/lstmp.hpp"
#include "vdcnn/network.hpp"
#include "vdcnn/ops.hpp"
#include "vdcnn/random.hpp"

namespace vdcnn {

/// Feature archives of one split, as produced by the `features` stage.
struct FeatureArchives {
  Archive fbank40;  // (3, T, 40): normalised statics, deltas, delta-deltas
  Archive fbank64;  // (3, T, 64)
  Archive mfcc;     // aux:mfcc    (T x 39)
  Archive fmllr;    // aux:fmllr   (T x 40)
  Archive ivector;  // aux:ivector (per utterance, 100)

  std::vector<Archive> aux() const { return {mfcc, fmllr, ivector}; }
  const Archive& fbank(std::size_t dims) const {
    if (dims == 40) return fbank40;
    if (dims == 64) return fbank64;
    throw DataError("no filterbank archive with " + std::to_string(dims) + " bands");
  }
};

/// Feature extraction for a set of utterances. The fbank archives carry
/// the labels.
inline FeatureArchives extract_features(const std::vector<CorpusUtterance>& utts,
                                        std::uint64_t standin_seed) {
  FeatureArchives fa;
  fa.fbank40.kind = "fbank40";
  fa.fbank64.kind = "fbank64";
  fa.mfcc.kind = aux_archive_kind("mfcc");
  fa.fmllr.kind = aux_archive_kind("fmllr");
  fa.ivector.kind = aux_archive_kind("ivector");
  for (const auto& u : utts) {
    for (std::size_t bands : {std::size_t{40}, std::size_t{64}}) {
      FrontendConfig cfg;
      cfg.n_mels = bands;
      cfg.map_mode = MapMode::kStaticDelta3;
      const Tensor fb = compute_fbank(u.samples, cfg);
      UtteranceFeatures f{u.id, stack_feature_maps(fb, cfg), {}, u.labels};
      if (f.labels.size() != f.frames())
        throw DataError(u.id + ": " + std::to_string(u.labels.size()) + " labels for " +
                        std::to_string(f.frames()) + " frames");
      (bands == 40 ? fa.fbank40 : fa.fbank64).records.push_back(to_record(f));
      if (bands == 40) {
        const Tensor mf = mfcc_stream(fb);
        fa.mfcc.records.push_back(aux_record(u.id, mf.dim(0), mf.dim(1), mf.values()));
        Tensor normed = fb;
        normalize_mean_variance(normed);
        const Tensor fm = standin_fmllr(normed, standin_seed, u.speaker);
        fa.fmllr.records.push_back(aux_record(u.id, fm.dim(0), fm.dim(1), fm.values()));
        fa.ivector.records.push_back(
            aux_record(u.id, 0, kIvectorDim, standin_ivector(standin_seed, u.speaker, u.condition)));
      }
    }
  }
  return fa;
}

struct DatasetUtterance {
  std::string id;
  char condition = 'A';
  Tensor maps;  // (n_maps, T, F)
  Tensor aux;   // (T, aux_dim) or empty
  std::vector<std::uint32_t> labels;

  std::size_t frames() const { return labels.size(); }
};

/// Frame-level view over utterances for a given model input shape.
class FrameDataset {
 public:
  FrameDataset() = default;

  /// `input_shape` is (maps, context, F); maps must be 1 or 3.
  FrameDataset(const FeatureArchives& fa, const Shape& input_shape,
               std::optional<AuxKind> aux = std::nullopt)
      : input_shape_(input_shape) {
    if (input_shape.size() != 3) throw DimensionError("frame input must be (maps, context, F)");
    const std::size_t maps = input_shape[0];
    if (maps != 1 && maps != 3) throw DimensionError("models take 1 or 3 input maps");
    const auto aux_archives = fa.aux();
    for (const auto& r : fa.fbank(input_shape[2]).records) {
      const UtteranceFeatures f = to_features(r);
      DatasetUtterance u;
      u.id = f.id;
      u.condition = parse_utterance_id(f.id).second;
      u.labels = f.labels;
      if (u.labels.size() != f.frames()) throw DataError(f.id + " lacks frame labels");
      const std::size_t T = f.frames(), F = f.maps.dim(2);
      u.maps = Tensor({maps, T, F},
                      std::vector<double>(f.maps.values().begin(),
                                          f.maps.values().begin() + static_cast<std::ptrdiff_t>(maps * T * F)));
      if (aux) u.aux = load_aux(aux_archives, *aux, f.id, T);
      for (std::size_t t = 0; t < T; ++t) index_.emplace_back(utts_.size(), t);
      utts_.push_back(std::move(u));
    }
  }

  std::size_t size() const { return index_.size(); }
  const std::vector<DatasetUtterance>& utterances() const { return utts_; }
  const Shape& input_shape() const { return input_shape_; }

  FrameSample sample(std::size_t i) const {
    const auto [u, t] = index_[i];
    return sample(u, t);
  }

  FrameSample sample(std::size_t utt, std::size_t t) const {
    const DatasetUtterance& u = utts_[utt];
    FrameSample s;
    s.maps = assemble_input(u.maps, t, input_shape_[1]);
    if (!u.aux.empty()) {
      const std::size_t d = u.aux.dim(1);
      s.aux.assign(u.aux.values().begin() + static_cast<std::ptrdiff_t>(t * d),
                   u.aux.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * d));
    }
    s.label = u.labels[t];
    return s;
  }

  std::vector<std::uint32_t> all_labels() const {
    std::vector<std::uint32_t> out;
    for (const auto& u : utts_) out.insert(out.end(), u.labels.begin(), u.labels.end());
    return out;
  }

 private:
  Shape input_shape_;
  std::vector<DatasetUtterance> utts_;
  std::vector<std::pair<std::size_t, std::size_t>> index_;
};

/// Single-frame 40-band sequences for recurrent models, optionally with the
/// utterance i-vector appended to every frame.
inline std::vector<SequenceExample> sequence_dataset(const FeatureArchives& fa, bool with_ivector) {
  std::vector<SequenceExample> out;
  const std::vector<Archive> aux{fa.ivector};
  for (const auto& r : fa.fbank40.records) {
    const UtteranceFeatures f = to_features(r);
    const std::size_t T = f.frames(), F = f.maps.dim(2);
    SequenceExample ex;
    ex.id = f.id;
    ex.labels = f.labels;
    ex.frames = Tensor({T, F}, std::vector<double>(f.maps.values().begin(),
                                                   f.maps.values().begin() + static_cast<std::ptrdiff_t>(T * F)));
    if (with_ivector) {
      const Tensor iv = load_aux(aux, AuxKind::kIvector, f.id, 1);
      ex.frames = speaker_aware_input(ex.frames, iv.values());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frame-level CE training

struct TrainOptions {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
};

struct TrainStats {
  std::vector<double> epoch_ce;       // [0] before any update
  std::vector<double> heldout_ce;     // same indexing, when a held-out set is given
  std::size_t updates = 0;
};

template <class Model>
double mean_ce(const Model& model, const FrameDataset& data) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const FrameSample s = data.sample(i);
    loss -= log_softmax(model.logits(s))[s.label];
  }
  return data.size() ? loss / static_cast<double>(data.size()) : 0.0;
}

/// Minibatch SGD with momentum on frame CE. Batches are summed in index
/// order and averaged.
template <class Model>
TrainStats train_frames(Model& model, const FrameDataset& data, const TrainOptions& opt,
                        const FrameDataset* heldout = nullptr,
                        const std::function<void(std::size_t, double, double)>& on_epoch = {}) {
  if (data.size() == 0) throw EmptyInputError("training set is empty");
  if (opt.batch < 1) throw DomainError("batch size must be >= 1");
  TrainStats st;
  const auto record = [&](std::size_t epoch) {
    st.epoch_ce.push_back(mean_ce(model, data));
    const double h = heldout ? mean_ce(model, *heldout) : std::nan("");
    if (heldout) st.heldout_ce.push_back(h);
    if (!std::isfinite(st.epoch_ce.back()))
      throw DivergenceError("training CE became non-finite in epoch " + std::to_string(epoch));
    if (on_epoch) on_epoch(epoch, st.epoch_ce.back(), h);
  };
  record(0);
  SgdMomentum sgd(opt.learning_rate, opt.momentum);
  Rng rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += opt.batch) {
      const std::size_t n = std::min(opt.batch, order.size() - b);
      auto grads = zeros_like(std::as_const(model).parameters());
      for (std::size_t k = 0; k < n; ++k) {
        const double loss = model.accumulate(data.sample(order[b + k]), grads);
        if (!std::isfinite(loss))
          throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch));
      }
      for (auto& g : grads) g *= 1.0 / static_cast<double>(n);
      try {
        sgd.step(model.parameters(), grads);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " in epoch " + std::to_string(epoch));
      }
      ++st.updates;
    }
    record(epoch);
  }
  return st;
}

/// (T, n_states) logits for every frame of one dataset utterance.
template <class Model>
Tensor utterance_logits(const Model& model, const FrameDataset& data, std::size_t utt) {
  const std::size_t T = data.utterances()[utt].frames(), n = model.n_states();
  Tensor out({T, n});
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor z = model.logits(data.sample(utt, t));
    std::copy(z.values().begin(), z.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(t * n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "VDCNNCKP" u32 version  u32 kind_len kind  u64 meta_len meta
//   u64 n_priors f64[]  u64 n_tensors  per tensor: u32 rank u64[rank] f64[]

inline constexpr char kCheckpointMagic[8] = {'V', 'D', 'C', 'N', 'N', 'C', 'K', 'P'};

struct Checkpoint {
  std::string kind;  // "ffnet" | "joint" | "lstmp"
  std::map<std::string, std::string> meta;
  std::string spec_text;  // architecture spec, empty for lstmp
  std::vector<double> log_priors;
  std::vector<Tensor> tensors;

  const std::string& get(const std::string& key) const {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("checkpoint lacks key '" + key + "'");
    return it->second;
  }
  std::size_t get_size(const std::string& key) const { return std::stoul(get(key)); }
};

inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream meta;
  for (const auto& [k, v] : c.meta) meta << k << '=' << v << '\n';
  meta << "---\n" << c.spec_text;
  const std::string m = meta.str();
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 8);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(c.kind.size()));
  w.bytes(c.kind);
  w.u64(m.size());
  w.bytes(m);
  w.u64(c.log_priors.size());
  for (double v : c.log_priors) w.f64(v);
  w.u64(c.tensors.size());
  for (const Tensor& t : c.tensors) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  }
  return w.str();
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw FormatError("bad checkpoint magic");
  if (r.u32() != 1) throw FormatError("unsupported checkpoint version");
  Checkpoint c;
  c.kind = r.bytes(r.u32());
  const std::string m = r.bytes(r.u64());
  const auto sep = m.find("---\n");
  if (sep == std::string::npos) throw FormatError("checkpoint meta block is malformed");
  std::istringstream in(m.substr(0, sep));
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad checkpoint meta line '" + line + "'");
    c.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  c.spec_text = m.substr(sep + 4);
  const auto np = r.u64();
  if (np > bytes.size()) throw FormatError("checkpoint prior count is corrupt");
  c.log_priors.resize(np);
  for (auto& v : c.log_priors) v = r.f64();
  const auto nt = r.u64();
  if (nt > bytes.size()) throw FormatError("checkpoint tensor count is corrupt");
  for (std::uint64_t i = 0; i < nt; ++i) {
    Shape s(r.u32());
    for (auto& d : s) d = r.u64();
    std::vector<double> v(shape_size(s));
    if (v.size() > bytes.size()) throw FormatError("checkpoint tensor is corrupt");
    for (auto& x : v) x = r.f64();
    c.tensors.emplace_back(std::move(s), std::move(v));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return c;
}

inline void store_parameters(Checkpoint& c, const ConstParamRefs& params) {
  c.tensors.clear();
  for (const Tensor* p : params) c.tensors.push_back(*p);
}

inline void load_parameters(const Checkpoint& c, const ParamRefs& params) {
  if (c.tensors.size() != params.size())
    throw FormatError("checkpoint has " + std::to_string(c.tensors.size()) + " tensors, model " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (c.tensors[i].shape() != params[i]->shape())
      throw FormatError("checkpoint tensor " + std::to_string(i) + " has shape " +
                        shape_string(c.tensors[i].shape()) + ", model expects " +
                        shape_string(params[i]->shape()));
    *params[i] = c.tensors[i];
  }
}

inline Checkpoint make_checkpoint(const FeedForwardNet& net, std::vector<double> log_priors) {
  Checkpoint c;
  c.kind = "ffnet";
  c.spec_text = format_spec(net.spec());
  c.log_priors = std::move(log_priors);
  store_parameters(c, net.parameters());
  return c;
}

inline Checkpoint make_checkpoint(const JointNetwork& net, AuxKind aux, std::vector<double> log_priors) {
  Checkpoint c;
  c.kind = "joint";
  c.meta["aux"] = aux_kind_name(aux);
  c.meta["aux_dim"] = std::to_string(net.spec().aux_dim);
  c.meta["aux_hidden"] = std::to_string(net.spec().aux_hidden);
  c.spec_text = format_spec(net.spec().base);
  c.log_priors = std::move(log_priors);
  store_parameters(c, net.parameters());
  return c;
}

inline Checkpoint make_checkpoint(const LstmpModel& m, std::size_t output_delay, bool ivector,
                                  std::vector<double> log_priors) {
  const LstmpConfig& k = m.config();
  Checkpoint c;
  c.kind = "lstmp";
  c.meta["input_dim"] = std::to_string(k.input_dim);
  c.meta["cell_dim"] = std::to_string(k.cell_dim);
  c.meta["proj_dim"] = std::to_string(k.proj_dim);
  c.meta["layers"] = std::to_string(k.layers);
  c.meta["n_states"] = std::to_string(k.n_states);
  c.meta["peephole"] = k.peephole ? "1" : "0";
  c.meta["output_delay"] = std::to_string(output_delay);
  c.meta["ivector"] = ivector ? "1" : "0";
  c.log_priors = std::move(log_priors);
  store_parameters(c, m.parameters());
  return c;
}

inline FeedForwardNet restore_ffnet(const Checkpoint& c) {
  if (c.kind != "ffnet") throw FormatError("checkpoint holds a " + c.kind + " model");
  FeedForwardNet net(parse_spec(c.spec_text), 0);
  load_parameters(c, net.parameters());
  return net;
}

inline JointNetwork restore_joint(const Checkpoint& c) {
  if (c.kind != "joint") throw FormatError("checkpoint holds a " + c.kind + " model");
  JointNetwork net(JointSpec{parse_spec(c.spec_text), c.get_size("aux_dim"), c.get_size("aux_hidden")}, 0);
  load_parameters(c, net.parameters());
  return net;
}

inline LstmpModel restore_lstmp(const Checkpoint& c) {
  if (c.kind != "lstmp") throw FormatError("checkpoint holds a " + c.kind + " model");
  LstmpConfig k;
  k.input_dim = c.get_size("input_dim");
  k.cell_dim = c.get_size("cell_dim");
  k.proj_dim = c.get_size("proj_dim");
  k.layers = c.get_size("layers");
  k.n_states = c.get_size("n_states");
  k.peephole = c.get("peephole") == "1";
  LstmpModel m(k, 0);
  load_parameters(c, m.parameters());
  return m;
}

}  // namespace vdcnn

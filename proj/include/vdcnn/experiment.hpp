// SPDX-License-Identifier: Apache-2.0
//
// End-to-end drivers: train a system on feature archives, score a test set,
// decode with Viterbi, and tabulate per-condition results.
#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "vdcnn/arch.hpp"
#include "vdcnn/corpus.hpp"
#include "vdcnn/decoder.hpp"
#include "vdcnn/joint.hpp"
#include "vdcnn/lstmp.hpp"
#include "vdcnn/network.hpp"
#include "vdcnn/train.hpp"

namespace vdcnn {

// ---------------------------------------------------------------------------
// Config hashing

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical "key=value\n" listing (keys sorted).
inline std::string config_hash(const std::map<std::string, std::string>& kv) {
  std::string canon;
  for (const auto& [k, v] : kv) canon += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

inline std::string fmt_double(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Reports

struct ConditionCell {
  std::size_t utterances = 0;
  double frame_accuracy = 0.0;
  double wer = 0.0;
};

struct RunReport {
  std::string system;
  std::array<ConditionCell, 4> cells{};
  ConditionCell average;
  std::string config_hash;
  std::uint64_t seed = 0;

  /// Utterance-weighted mean of the per-condition cells.
  static ConditionCell weighted_average(const std::array<ConditionCell, 4>& cells) {
    ConditionCell avg;
    double fa = 0.0, w = 0.0;
    for (const auto& c : cells) {
      avg.utterances += c.utterances;
      fa += static_cast<double>(c.utterances) * c.frame_accuracy;
      w += static_cast<double>(c.utterances) * c.wer;
    }
    if (avg.utterances) {
      avg.frame_accuracy = fa / static_cast<double>(avg.utterances);
      avg.wer = w / static_cast<double>(avg.utterances);
    }
    return avg;
  }
};

inline std::string format_report(const RunReport& r) {
  std::ostringstream os;
  os << "# system " << r.system << "  config " << r.config_hash << "  seed " << r.seed << '\n';
  os << "metric\tA\tB\tC\tD\tAVG\n";
  os << "utts";
  for (const auto& c : r.cells) os << '\t' << c.utterances;
  os << '\t' << r.average.utterances << '\n';
  os << "frame-acc";
  for (const auto& c : r.cells) os << '\t' << fmt_double(c.frame_accuracy, 4);
  os << '\t' << fmt_double(r.average.frame_accuracy, 4) << '\n';
  os << "wer%";
  for (const auto& c : r.cells) os << '\t' << fmt_double(100.0 * c.wer, 2);
  os << '\t' << fmt_double(100.0 * r.average.wer, 2) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Scoring and decoding

struct ScoredUtterance {
  std::string id;
  char condition = 'A';
  AcousticScores loglik;
  std::vector<std::uint32_t> labels;
};
using ScoreSet = std::vector<ScoredUtterance>;

struct DecodedUtterance {
  std::string id;
  char condition = 'A';
  std::vector<std::uint32_t> path;
  OutputScore score;
};

inline RunReport decode_and_score(const std::string& system, const ScoreSet& scores,
                                  const DecodeGraph& graph,
                                  std::vector<DecodedUtterance>* details = nullptr) {
  RunReport rep;
  rep.system = system;
  std::array<double, 4> fa{}, wer{};
  for (const auto& u : scores) {
    const ViterbiResult v = viterbi(u.loglik, graph);
    const OutputScore s = score_output(v.path, u.labels, graph.lexicon);
    const std::size_t c = condition_index(u.condition);
    ++rep.cells[c].utterances;
    fa[c] += s.frame_accuracy;
    wer[c] += s.wer;
    if (details) details->push_back({u.id, u.condition, v.path, s});
  }
  for (std::size_t c = 0; c < 4; ++c)
    if (rep.cells[c].utterances) {
      rep.cells[c].frame_accuracy = fa[c] / static_cast<double>(rep.cells[c].utterances);
      rep.cells[c].wer = wer[c] / static_cast<double>(rep.cells[c].utterances);
    }
  rep.average = RunReport::weighted_average(rep.cells);
  return rep;
}

/// Decode results in `utt-id, WER, frame-acc, path` tab-separated form.
inline std::string format_decodes(const std::vector<DecodedUtterance>& d) {
  std::ostringstream os;
  for (const auto& u : d) {
    os << u.id << '\t' << fmt_double(u.score.wer, 4) << '\t' << fmt_double(u.score.frame_accuracy, 4)
       << '\t';
    for (std::size_t t = 0; t < u.path.size(); ++t) os << (t ? " " : "") << u.path[t];
    os << '\n';
  }
  return os.str();
}

inline ScoreSet fuse_scores(const ScoreSet& a, const ScoreSet& b, FusionWeights w) {
  if (a.size() != b.size()) throw FusionError("score sets cover different utterance lists");
  ScoreSet out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id)
      throw FusionError("utterance order differs: " + a[i].id + " vs " + b[i].id);
    out.push_back({a[i].id, a[i].condition, fuse(a[i].loglik, b[i].loglik, w), a[i].labels});
  }
  return out;
}

inline Archive score_archive(const ScoreSet& s) {
  Archive ar;
  ar.kind = "scores";
  for (const auto& u : s) {
    ArchiveRecord r = score_record(u.id, u.loglik.matrix);
    r.labels = u.labels;
    ar.records.push_back(std::move(r));
  }
  return ar;
}

inline ScoreSet from_score_archive(const Archive& ar) {
  if (ar.kind != "scores") throw DataError("expected a score archive, got '" + ar.kind + "'");
  ScoreSet out;
  for (const auto& r : ar.records) {
    ScoredUtterance u;
    u.id = r.id;
    u.condition = parse_utterance_id(r.id).second;
    u.loglik = {Tensor({static_cast<std::size_t>(r.frames), r.dims}, r.data), ScoreKind::kLogLikelihood};
    if (r.labels) u.labels = *r.labels;
    out.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Systems

enum class ModelType { kFeedForward, kJoint, kLstmp };

struct SystemConfig {
  ModelType type = ModelType::kFeedForward;
  std::string arch = "vd6";                 // catalog name (feed-forward / joint)
  std::optional<ArchitectureSpec> spec;     // overrides `arch` when set
  CatalogOptions catalog{8, 128, 8};
  AuxKind aux = AuxKind::kFmllrIvector;     // joint only
  std::size_t aux_hidden = 64;
  TrainOptions train;
  LstmpConfig lstmp{40, 64, 32, 3, 8, false};
  BpttConfig bptt{20, 4, -1.0, 1.0, true, 5};
  bool speaker_aware = false;               // lstmp: append i-vector
  std::uint64_t seed = 1;

  ArchitectureSpec architecture() const {
    if (spec) return *spec;
    return find_architecture(arch, catalog);
  }

  std::map<std::string, std::string> describe() const {
    std::map<std::string, std::string> kv;
    kv["type"] = type == ModelType::kFeedForward ? "ffnet" : type == ModelType::kJoint ? "joint" : "lstmp";
    kv["seed"] = std::to_string(seed);
    kv["lr"] = fmt_double(train.learning_rate, 8);
    kv["momentum"] = fmt_double(train.momentum, 8);
    kv["epochs"] = std::to_string(train.epochs);
    if (type == ModelType::kLstmp) {
      kv["cell_dim"] = std::to_string(lstmp.cell_dim);
      kv["proj_dim"] = std::to_string(lstmp.proj_dim);
      kv["layers"] = std::to_string(lstmp.layers);
      kv["peephole"] = lstmp.peephole ? "1" : "0";
      kv["chunk"] = std::to_string(bptt.chunk);
      kv["parallel"] = std::to_string(bptt.parallel_utterances);
      kv["delay"] = std::to_string(bptt.output_delay);
      kv["clip"] = bptt.clip ? fmt_double(bptt.clip_lo, 4) + ":" + fmt_double(bptt.clip_hi, 4) : "off";
      kv["ivector"] = speaker_aware ? "1" : "0";
    } else {
      kv["spec"] = format_spec(architecture());
      kv["batch"] = std::to_string(train.batch);
      if (type == ModelType::kJoint) {
        kv["aux"] = aux_kind_name(aux);
        kv["aux_hidden"] = std::to_string(aux_hidden);
      }
    }
    return kv;
  }

  std::string name() const {
    if (type == ModelType::kLstmp) return speaker_aware ? "lstmp-ivec" : "lstmp";
    const std::string base = architecture().name;
    return type == ModelType::kJoint ? base + "+" + aux_kind_name(aux) : base;
  }
};

struct TrainedSystem {
  Checkpoint checkpoint;
  std::vector<double> epoch_ce;
  std::vector<double> heldout_ce;
};

using EpochLog = std::function<void(std::size_t epoch, double train_ce, double heldout_ce)>;

inline std::vector<std::vector<std::uint32_t>> label_sequences(const FeatureArchives& fa) {
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& r : fa.fbank40.records)
    if (r.labels) out.push_back(*r.labels);
  return out;
}

inline TrainedSystem train_system(const SystemConfig& cfg, const FeatureArchives& train,
                                  const FeatureArchives* heldout = nullptr, const EpochLog& log = {}) {
  TrainedSystem out;
  const auto seqs = label_sequences(train);
  std::vector<std::uint32_t> all;
  for (const auto& s : seqs) all.insert(all.end(), s.begin(), s.end());

  if (cfg.type == ModelType::kLstmp) {
    LstmpConfig k = cfg.lstmp;
    k.input_dim = 40 + (cfg.speaker_aware ? kIvectorDim : 0);
    LstmpModel model(k, cfg.seed);
    const auto data = sequence_dataset(train, cfg.speaker_aware);
    std::vector<SequenceExample> held;
    if (heldout) held = sequence_dataset(*heldout, cfg.speaker_aware);
    TbpttOptions opt{cfg.train.learning_rate, cfg.train.momentum, cfg.train.epochs, cfg.seed};
    const auto stats = train_tbptt(model, data, cfg.bptt, opt, [&](std::size_t e, double ce) {
      const double h = heldout ? sequence_ce(model, held, cfg.bptt.output_delay) : std::nan("");
      if (heldout) out.heldout_ce.push_back(h);
      if (log) log(e, ce, h);
    });
    out.epoch_ce = stats.epoch_ce;
    out.checkpoint = make_checkpoint(model, cfg.bptt.output_delay, cfg.speaker_aware,
                                     estimate_log_priors(all, k.n_states));
  } else {
    const ArchitectureSpec spec = cfg.architecture();
    const auto priors = estimate_log_priors(all, spec.n_states);
    if (cfg.type == ModelType::kFeedForward) {
      FeedForwardNet net = build_network(spec, cfg.seed, cfg.catalog.channel_base);
      const FrameDataset data(train, spec.input_shape);
      std::optional<FrameDataset> held;
      if (heldout) held.emplace(*heldout, spec.input_shape);
      const auto st = train_frames(net, data, cfg.train, held ? &*held : nullptr, log);
      out.epoch_ce = st.epoch_ce;
      out.heldout_ce = st.heldout_ce;
      out.checkpoint = make_checkpoint(net, priors);
    } else {
      const auto v = validate(spec, cfg.catalog.channel_base);
      if (!v.empty()) throw ShapeError(spec.name + ": " + format_violation(v.front()));
      JointNetwork net(JointSpec{spec, aux_dimension(cfg.aux), cfg.aux_hidden}, cfg.seed);
      const FrameDataset data(train, spec.input_shape, cfg.aux);
      std::optional<FrameDataset> held;
      if (heldout) held.emplace(*heldout, spec.input_shape, cfg.aux);
      const auto st = train_frames(net, data, cfg.train, held ? &*held : nullptr, log);
      out.epoch_ce = st.epoch_ce;
      out.heldout_ce = st.heldout_ce;
      out.checkpoint = make_checkpoint(net, cfg.aux, priors);
    }
  }
  out.checkpoint.meta["self_loop"] = fmt_double(estimate_self_loop(seqs), 12);
  out.checkpoint.meta["config_hash"] = config_hash(cfg.describe());
  out.checkpoint.meta["name"] = cfg.name();
  out.checkpoint.meta["seed"] = std::to_string(cfg.seed);
  return out;
}

inline std::size_t checkpoint_states(const Checkpoint& c) {
  return c.log_priors.size();
}

/// Scaled log-likelihoods for every test utterance, in archive order.
inline ScoreSet score_system(const Checkpoint& ckpt, const FeatureArchives& test, double scale = 1.0) {
  ScoreSet out;
  const auto emit = [&](const std::string& id, const std::vector<std::uint32_t>& labels,
                        const Tensor& logits) {
    out.push_back({id, parse_utterance_id(id).second,
                   posteriors_to_loglik(log_posteriors(logits), ckpt.log_priors, scale), labels});
  };
  if (ckpt.kind == "lstmp") {
    const LstmpModel m = restore_lstmp(ckpt);
    const std::size_t delay = ckpt.get_size("output_delay");
    for (const auto& ex : sequence_dataset(test, ckpt.get("ivector") == "1"))
      emit(ex.id, ex.labels, frame_logits(m, ex.frames, delay));
  } else if (ckpt.kind == "ffnet") {
    const FeedForwardNet net = restore_ffnet(ckpt);
    const FrameDataset data(test, net.spec().input_shape);
    for (std::size_t u = 0; u < data.utterances().size(); ++u)
      emit(data.utterances()[u].id, data.utterances()[u].labels, utterance_logits(net, data, u));
  } else if (ckpt.kind == "joint") {
    const JointNetwork net = restore_joint(ckpt);
    const FrameDataset data(test, net.spec().base.input_shape, parse_aux_kind(ckpt.get("aux")));
    for (std::size_t u = 0; u < data.utterances().size(); ++u)
      emit(data.utterances()[u].id, data.utterances()[u].labels, utterance_logits(net, data, u));
  } else {
    throw FormatError("unknown checkpoint kind '" + ckpt.kind + "'");
  }
  return out;
}

inline DecodeGraph graph_for(const Checkpoint& ckpt) {
  return make_toy_graph(ckpt.log_priors, std::stod(ckpt.get("self_loop")));
}

inline RunReport evaluate_system(const Checkpoint& ckpt, const FeatureArchives& test,
                                 double scale = 1.0, std::vector<DecodedUtterance>* details = nullptr) {
  RunReport r = decode_and_score(ckpt.get("name"), score_system(ckpt, test, scale), graph_for(ckpt), details);
  r.config_hash = ckpt.get("config_hash");
  r.seed = std::stoull(ckpt.get("seed"));
  return r;
}

struct JointDecodeResult {
  RunReport system1, system2, fused;
  std::vector<DecodedUtterance> fused_details;
};

/// Decodes system 1, system 2 and their state-level fusion. The decode graph
/// (priors and self-loop rate) comes from system 1.
inline JointDecodeResult run_joint_decode(const Checkpoint& c1, const Checkpoint& c2,
                                          const FeatureArchives& test, FusionWeights w,
                                          double scale = 1.0) {
  if (checkpoint_states(c1) != checkpoint_states(c2))
    throw FusionError("systems have " + std::to_string(checkpoint_states(c1)) + " and " +
                      std::to_string(checkpoint_states(c2)) + " states");
  const ScoreSet s1 = score_system(c1, test, scale), s2 = score_system(c2, test, scale);
  const DecodeGraph g = graph_for(c1);
  JointDecodeResult r;
  r.system1 = decode_and_score(c1.get("name"), s1, g);
  r.system2 = decode_and_score(c2.get("name"), s2, g);
  r.fused = decode_and_score(c1.get("name") + "(x)" + c2.get("name"), fuse_scores(s1, s2, w), g,
                             &r.fused_details);
  const std::string h = config_hash({{"s1", c1.get("config_hash")},
                                     {"s2", c2.get("config_hash")},
                                     {"w1", fmt_double(w.w1, 8)},
                                     {"w2", fmt_double(w.w2, 8)},
                                     {"scale", fmt_double(scale, 8)}});
  for (RunReport* p : {&r.system1, &r.system2, &r.fused}) p->config_hash = h;
  r.system1.seed = std::stoull(c1.get("seed"));
  r.system2.seed = std::stoull(c2.get("seed"));
  r.fused.seed = r.system1.seed;
  return r;
}

}  // namespace vdcnn

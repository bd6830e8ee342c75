// SPDX-License-Identifier: Apache-2.0
//
// Synthetic noisy "speech" corpus with four test conditions:
//   A clean, B additive noise, C channel filtered, D channel + noise.
// Each utterance is a sequence of class segments; a class is a fixed set of
// harmonic partials (warped per speaker) over a weak noise floor. Frame labels
// come straight from the segment schedule.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "vdcnn/archive.hpp"
#include "vdcnn/errors.hpp"
#include "vdcnn/frontend.hpp"
#include "vdcnn/random.hpp"
#include "vdcnn/tensor.hpp"

namespace vdcnn {

inline constexpr char kConditions[4] = {'A', 'B', 'C', 'D'};

inline std::size_t condition_index(char c) {
  for (std::size_t i = 0; i < 4; ++i)
    if (kConditions[i] == c) return i;
  throw DataError(std::string("unknown condition '") + c + "'");
}

struct ToyCorpusConfig {
  std::size_t n_classes = 8;
  std::size_t train_utterances = 48;
  std::size_t test_utterances = 8;  // each rendered under all four conditions
  std::size_t min_frames = 40;
  std::size_t max_frames = 80;
  std::size_t min_segment = 4;  // frames
  std::size_t max_segment = 12;
  std::size_t n_speakers = 4;
  std::vector<double> snr_db = {10.0, 15.0, 20.0};
  std::vector<double> channel_filter = {0.6, -0.3, 0.25, 0.1, -0.05};
  double sample_rate = 16000.0;
  std::uint64_t seed = 7;

  void check() const {
    if (n_classes < 2) throw DomainError("toy corpus needs at least two classes");
    if (min_frames < 1 || min_frames > max_frames) throw DomainError("bad frame range");
    if (min_segment < 1 || min_segment > max_segment) throw DomainError("bad segment range");
    if (n_speakers < 1) throw DomainError("toy corpus needs at least one speaker");
    if (snr_db.empty()) throw DomainError("snr list is empty");
    for (double s : snr_db)
      if (std::isnan(s) || s == -std::numeric_limits<double>::infinity())
        throw DomainError("snr values must be finite dB or +inf (no noise)");
    if (channel_filter.empty()) throw DomainError("channel filter is empty");
  }
};

struct CorpusUtterance {
  std::string id;
  std::size_t speaker = 0;
  char condition = 'A';
  double snr_db = std::numeric_limits<double>::infinity();
  std::vector<double> samples;
  std::vector<std::uint32_t> labels;  // one per analysis frame
};

struct ToyCorpus {
  std::vector<CorpusUtterance> train, test;
};

inline std::string utterance_id(const std::string& split, std::size_t n, std::size_t speaker,
                                char condition) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%04zu-s%zu-%c", split.c_str(), n, speaker, condition);
  return buf;
}

/// Parses `<split>-<nnnn>-s<k>-<C>` into (speaker, condition).
inline std::pair<std::size_t, char> parse_utterance_id(const std::string& id) {
  const auto dash = id.rfind('-');
  const auto sdash = dash == std::string::npos ? dash : id.rfind('-', dash - 1);
  if (dash == std::string::npos || sdash == std::string::npos || dash + 2 != id.size() ||
      id[sdash + 1] != 's')
    throw DataError("malformed utterance id '" + id + "'");
  const char c = id.back();
  condition_index(c);
  return {std::stoul(id.substr(sdash + 2, dash - sdash - 2)), c};
}

/// Partial frequencies (Hz) of class `c`: a low and a high partial chosen on
/// interleaved log-spaced grids so classes differ across the whole band.
inline std::vector<double> class_partials(std::size_t c, std::size_t n_classes) {
  const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(n_classes);
  const double lo = 250.0 * std::pow(2400.0 / 250.0, x);
  const double hi = 6000.0 * std::pow(2500.0 / 6000.0, x);
  return {lo, 2.0 * lo, hi};
}

inline double speaker_warp(std::size_t speaker, std::size_t n_speakers) {
  if (n_speakers < 2) return 1.0;
  return 0.94 + 0.12 * static_cast<double>(speaker) / static_cast<double>(n_speakers - 1);
}

inline double signal_energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline double measured_snr_db(std::span<const double> clean, std::span<const double> noisy) {
  double en = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) en += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
  return 10.0 * std::log10(signal_energy(clean) / en);
}

/// White Gaussian noise scaled so that signal/noise energy equals `snr_db`
/// exactly. +inf returns the input untouched.
inline std::vector<double> add_noise(std::span<const double> x, double snr_db, Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (snr_db == std::numeric_limits<double>::infinity()) return out;
  std::vector<double> n(x.size());
  for (auto& v : n) v = rng.normal();
  const double es = signal_energy(x), en = signal_energy(n);
  if (es <= 0.0 || en <= 0.0) return out;
  const double gain = std::sqrt(es / (en * std::pow(10.0, snr_db / 10.0)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += gain * n[i];
  return out;
}

/// Causal FIR filter, same length as the input.
inline std::vector<double> apply_channel(std::span<const double> x, std::span<const double> h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t k = 0; k < h.size() && k <= t; ++k) y[t] += h[k] * x[t - k];
  return y;
}

namespace detail {

struct CleanUtterance {
  std::size_t speaker = 0;
  std::vector<double> samples;
  std::vector<std::uint32_t> labels;
};

inline CleanUtterance render_clean(const ToyCorpusConfig& cfg, std::size_t speaker, Rng& rng) {
  FrontendConfig fe;
  fe.sample_rate = cfg.sample_rate;
  const std::size_t flen = fe.frame_samples(), shift = fe.shift_samples();
  const std::size_t frames = cfg.min_frames + rng.index(cfg.max_frames - cfg.min_frames + 1);
  const std::size_t n = flen + (frames - 1) * shift;

  // Segment schedule in frame units, then converted to sample boundaries.
  std::vector<std::pair<std::size_t, std::uint32_t>> segs;  // (end sample, class)
  std::size_t pos = 0;
  std::uint32_t prev = static_cast<std::uint32_t>(cfg.n_classes);
  while (pos < n) {
    const std::size_t len = cfg.min_segment + rng.index(cfg.max_segment - cfg.min_segment + 1);
    std::uint32_t c;
    do c = static_cast<std::uint32_t>(rng.index(cfg.n_classes));
    while (c == prev);
    prev = c;
    pos = std::min(n, pos + len * shift);
    segs.emplace_back(pos, c);
  }

  CleanUtterance u;
  u.speaker = speaker;
  u.samples.assign(n, 0.0);
  const double warp = speaker_warp(speaker, cfg.n_speakers);
  std::size_t begin = 0;
  for (const auto& [end, c] : segs) {
    const auto partials = class_partials(c, cfg.n_classes);
    std::vector<double> phase, amp;
    for (std::size_t k = 0; k < partials.size(); ++k) {
      phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
      amp.push_back(rng.uniform(0.7, 1.0) / static_cast<double>(k + 1));
    }
    for (std::size_t t = begin; t < end; ++t) {
      const double s = static_cast<double>(t) / cfg.sample_rate;
      double v = 0.0;
      for (std::size_t k = 0; k < partials.size(); ++k)
        v += amp[k] * std::sin(2.0 * std::numbers::pi * partials[k] * warp * s + phase[k]);
      u.samples[t] = 0.3 * v + 0.01 * rng.normal();
    }
    begin = end;
  }
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t centre = f * shift + flen / 2;
    const auto it = std::find_if(segs.begin(), segs.end(),
                                 [centre](const auto& s) { return centre < s.first; });
    u.labels.push_back(it->second);
  }
  return u;
}

inline CorpusUtterance render_condition(const ToyCorpusConfig& cfg, const CleanUtterance& clean,
                                        std::string id, char condition, Rng& rng) {
  CorpusUtterance u;
  u.id = std::move(id);
  u.speaker = clean.speaker;
  u.condition = condition;
  u.labels = clean.labels;
  std::vector<double> x = clean.samples;
  if (condition == 'C' || condition == 'D') x = apply_channel(x, cfg.channel_filter);
  if (condition == 'B' || condition == 'D') {
    u.snr_db = cfg.snr_db[rng.index(cfg.snr_db.size())];
    x = add_noise(x, u.snr_db, rng);
  }
  u.samples = std::move(x);
  return u;
}

}  // namespace detail

/// Train utterances cycle through A/B/C/D (multi-condition training); every
/// test utterance is rendered under all four conditions from the same clean
/// source.
inline ToyCorpus synth_corpus(const ToyCorpusConfig& cfg) {
  cfg.check();
  Rng rng(cfg.seed);
  ToyCorpus out;
  for (std::size_t i = 0; i < cfg.train_utterances; ++i) {
    const std::size_t spk = i % cfg.n_speakers;
    const char cond = kConditions[i % 4];
    const auto clean = detail::render_clean(cfg, spk, rng);
    out.train.push_back(
        detail::render_condition(cfg, clean, utterance_id("train", i, spk, cond), cond, rng));
  }
  for (std::size_t i = 0; i < cfg.test_utterances; ++i) {
    const std::size_t spk = i % cfg.n_speakers;
    const auto clean = detail::render_clean(cfg, spk, rng);
    for (char cond : kConditions)
      out.test.push_back(
          detail::render_condition(cfg, clean, utterance_id("test", i, spk, cond), cond, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stand-ins for speaker-adaptive inputs (the real estimators are not part of
// this library).

/// Deterministic 100-dim vector per (speaker, condition).
inline std::vector<double> standin_ivector(std::uint64_t seed, std::size_t speaker, char condition,
                                           std::size_t dim = 100) {
  Rng rng(seed * 1000003ULL + speaker * 131ULL + static_cast<std::uint64_t>(condition));
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

/// Per-speaker near-identity affine transform applied to normalised log-mel
/// rows: y = (I + 0.1 R) x + 0.1 b.
inline Tensor standin_fmllr(const Tensor& normalized_fbank, std::uint64_t seed, std::size_t speaker) {
  const std::size_t T = normalized_fbank.dim(0), D = normalized_fbank.dim(1);
  Rng rng(seed * 7919ULL + speaker);
  Tensor a({D, D}), b({D});
  const double scale = 0.1 / std::sqrt(static_cast<double>(D));
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = 0; j < D; ++j) a.at(i, j) = (i == j ? 1.0 : 0.0) + scale * rng.normal();
  for (auto& v : b.values()) v = 0.1 * rng.normal();
  Tensor out({T, D});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < D; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < D; ++j) acc += a.at(i, j) * normalized_fbank.at(t, j);
      out.at(t, i) = acc;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Waveform archives: n_maps = 1, frames = samples, dims = 1, labels = frame
// labels, aux = {snr_db} (absent for clean conditions).

inline Archive wave_archive(const std::vector<CorpusUtterance>& utts) {
  Archive ar;
  ar.kind = "wave";
  for (const auto& u : utts) {
    ArchiveRecord r;
    r.id = u.id;
    r.n_maps = 1;
    r.frames = u.samples.size();
    r.dims = 1;
    r.data = u.samples;
    if (std::isfinite(u.snr_db)) r.aux = {u.snr_db};
    r.labels = u.labels;
    ar.records.push_back(std::move(r));
  }
  return ar;
}

inline std::vector<CorpusUtterance> from_wave_archive(const Archive& ar) {
  if (ar.kind != "wave") throw DataError("expected a wave archive, got kind '" + ar.kind + "'");
  std::vector<CorpusUtterance> out;
  for (const auto& r : ar.records) {
    if (r.n_maps != 1 || r.dims != 1) throw DataError("wave record " + r.id + " is not mono");
    CorpusUtterance u;
    u.id = r.id;
    std::tie(u.speaker, u.condition) = parse_utterance_id(r.id);
    if (!r.aux.empty()) u.snr_db = r.aux[0];
    u.samples = r.data;
    if (r.labels) u.labels = *r.labels;
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace vdcnn

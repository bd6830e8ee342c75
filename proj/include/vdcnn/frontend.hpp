// SPDX-License-Identifier: Apache-2.0
//
// Waveform -> log mel filterbank / MFCC front end, regression deltas, and
// context-window assembly of CNN input feature maps.
#pragma once

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vdcnn/errors.hpp"
#include "vdcnn/tensor.hpp"

namespace vdcnn {

enum class MapMode { kStatic1, kStaticDelta3 };
enum class Normalization { kNone, kMeanVariance };

struct FrontendConfig {
  double sample_rate = 16000.0;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  double preemphasis = 0.97;
  std::size_t n_mels = 40;
  std::size_t n_mfcc = 13;
  std::size_t delta_window = 2;
  std::size_t context = 11;
  MapMode map_mode = MapMode::kStatic1;
  Normalization normalization = Normalization::kMeanVariance;

  std::size_t frame_samples() const {
    return static_cast<std::size_t>(std::lround(sample_rate * frame_length_ms / 1000.0));
  }
  std::size_t shift_samples() const {
    return static_cast<std::size_t>(std::lround(sample_rate * frame_shift_ms / 1000.0));
  }
  std::size_t fft_size() const { return std::bit_ceil(frame_samples()); }
  std::size_t n_maps() const { return map_mode == MapMode::kStatic1 ? 1 : 3; }
};

/// One utterance as a stack of (maps, frames, dims) feature maps, with an
/// optional auxiliary vector and optional per-frame state labels.
struct UtteranceFeatures {
  std::string id;
  Tensor maps;
  std::vector<double> aux;
  std::vector<std::uint32_t> labels;

  std::size_t frames() const { return maps.dim(1); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Mel-scale points delimiting the triangular filters: n_mels + 2 values,
/// evenly spaced in mel from 0 Hz to Nyquist. Filter m is
/// (points[m], points[m+1], points[m+2]).
inline std::vector<double> mel_points(const FrontendConfig& cfg) {
  const double lo = hz_to_mel(0.0), hi = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> pts(cfg.n_mels + 2);
  for (std::size_t i = 0; i < pts.size(); ++i)
    pts[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1);
  return pts;
}

inline std::vector<double> mel_center_frequencies(const FrontendConfig& cfg) {
  const auto pts = mel_points(cfg);
  std::vector<double> centers(cfg.n_mels);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) centers[m] = mel_to_hz(pts[m + 1]);
  return centers;
}

namespace detail {

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::span<double> input() { return {in_, n_}; }

  /// |X_k|^2 for k = 0..n/2.
  void power(std::span<double> out) {
    fftw_execute(plan_);
    for (std::size_t k = 0; k <= n_ / 2; ++k)
      out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

// Dense (n_mels x n_fft/2+1) triangular weights, triangles in the mel domain.
inline std::vector<double> mel_weights(const FrontendConfig& cfg) {
  const std::size_t bins = cfg.fft_size() / 2 + 1;
  const auto pts = mel_points(cfg);
  std::vector<double> w(cfg.n_mels * bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) {
    const double mel = hz_to_mel(static_cast<double>(k) * cfg.sample_rate /
                                 static_cast<double>(cfg.fft_size()));
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double left = pts[m], center = pts[m + 1], right = pts[m + 2];
      if (mel > left && mel < right)
        w[m * bins + k] = mel <= center ? (mel - left) / (center - left)
                                        : (right - mel) / (right - center);
    }
  }
  return w;
}

}  // namespace detail

inline constexpr double kLogFloor = 1e-10;

/// Log mel filterbank energies, (frames, n_mels).
inline Tensor compute_fbank(std::span<const double> waveform, const FrontendConfig& cfg) {
  const std::size_t flen = cfg.frame_samples(), shift = cfg.shift_samples();
  if (waveform.size() < flen || flen == 0)
    throw EmptyInputError("waveform of " + std::to_string(waveform.size()) +
                          " samples is shorter than one frame (" + std::to_string(flen) + ")");
  const std::size_t frames = 1 + (waveform.size() - flen) / shift;
  const std::size_t nfft = cfg.fft_size(), bins = nfft / 2 + 1;

  std::vector<double> window(flen);
  for (std::size_t i = 0; i < flen; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                       static_cast<double>(flen - 1));
  const auto weights = detail::mel_weights(cfg);

  detail::RealFft fft(nfft);
  std::vector<double> frame(flen), power(bins);
  Tensor out({frames, cfg.n_mels});
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy_n(waveform.begin() + static_cast<std::ptrdiff_t>(t * shift), flen, frame.begin());
    for (std::size_t i = flen - 1; i > 0; --i) frame[i] -= cfg.preemphasis * frame[i - 1];
    frame[0] -= cfg.preemphasis * frame[0];
    auto in = fft.input();
    std::fill(in.begin(), in.end(), 0.0);
    for (std::size_t i = 0; i < flen; ++i) in[i] = frame[i] * window[i];
    fft.power(power);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const double* w = weights.data() + m * bins;
      for (std::size_t k = 0; k < bins; ++k) e += w[k] * power[k];
      out.at(t, m) = std::log(std::max(e, kLogFloor));
    }
  }
  return out;
}

/// Orthonormal DCT-II of each log-mel row, first n_ceps coefficients.
inline Tensor compute_mfcc(const Tensor& fbank, std::size_t n_ceps = 13) {
  if (fbank.rank() != 2) throw DimensionError("fbank must be (frames, n_mels)");
  const std::size_t frames = fbank.dim(0), n = fbank.dim(1);
  if (n < n_ceps)
    throw DimensionError("need at least " + std::to_string(n_ceps) + " mel bins, got " +
                         std::to_string(n));
  std::vector<double> basis(n_ceps * n);
  for (std::size_t k = 0; k < n_ceps; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      basis[k * n + i] = s * std::cos(std::numbers::pi * static_cast<double>(k) *
                                      (2.0 * static_cast<double>(i) + 1.0) /
                                      (2.0 * static_cast<double>(n)));
  }
  Tensor out({frames, n_ceps});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < n_ceps; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += basis[k * n + i] * fbank.at(t, i);
      out.at(t, k) = acc;
    }
  return out;
}

namespace detail {

inline Tensor regression_delta(const Tensor& x, std::size_t window) {
  const std::size_t frames = x.dim(0), dims = x.dim(1);
  double denom = 0.0;
  for (std::size_t k = 1; k <= window; ++k) denom += static_cast<double>(k * k);
  denom *= 2.0;
  Tensor d({frames, dims});
  const auto clamp = [frames](std::ptrdiff_t t) {
    return static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(t, 0, static_cast<std::ptrdiff_t>(frames) - 1));
  };
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < dims; ++j) {
      double acc = 0.0;
      for (std::size_t k = 1; k <= window; ++k) {
        const auto ti = static_cast<std::ptrdiff_t>(t), ki = static_cast<std::ptrdiff_t>(k);
        acc += static_cast<double>(k) * (x.at(clamp(ti + ki), j) - x.at(clamp(ti - ki), j));
      }
      d.at(t, j) = acc / denom;
    }
  return d;
}

}  // namespace detail

/// Regression deltas with boundary-frame replication; the second element
/// applies the same operator to the first.
inline std::pair<Tensor, Tensor> compute_deltas(const Tensor& features, std::size_t window) {
  if (window < 1) throw DomainError("delta window must be >= 1");
  if (features.rank() != 2) throw DimensionError("features must be (frames, dims)");
  Tensor d = detail::regression_delta(features, window);
  Tensor dd = detail::regression_delta(d, window);
  return {std::move(d), std::move(dd)};
}

/// Per-dimension zero mean and unit (population) variance. Constant
/// dimensions are centred but left unscaled.
inline void normalize_mean_variance(Tensor& features) {
  const std::size_t frames = features.dim(0), dims = features.dim(1);
  for (std::size_t j = 0; j < dims; ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < frames; ++t) mean += features.at(t, j);
    mean /= static_cast<double>(frames);
    double var = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double d = features.at(t, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(frames);
    const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t t = 0; t < frames; ++t)
      features.at(t, j) = (features.at(t, j) - mean) * scale;
  }
}

/// Stacks static (and optionally delta / delta-delta) features into
/// (n_maps, frames, dims). Normalisation applies to the static stream
/// before deltas are taken.
inline Tensor stack_feature_maps(Tensor statics, const FrontendConfig& cfg) {
  if (cfg.normalization == Normalization::kMeanVariance) normalize_mean_variance(statics);
  const std::size_t frames = statics.dim(0), dims = statics.dim(1);
  std::vector<const Tensor*> streams{&statics};
  std::pair<Tensor, Tensor> deltas;
  if (cfg.map_mode == MapMode::kStaticDelta3) {
    deltas = compute_deltas(statics, cfg.delta_window);
    streams.push_back(&deltas.first);
    streams.push_back(&deltas.second);
  }
  Tensor maps({streams.size(), frames, dims});
  for (std::size_t m = 0; m < streams.size(); ++m)
    std::copy(streams[m]->values().begin(), streams[m]->values().end(),
              maps.values().begin() + static_cast<std::ptrdiff_t>(m * frames * dims));
  return maps;
}

/// Context window of `context` frames (odd) centred on `frame`, boundary
/// frames replicated: (n_maps, context, dims).
inline Tensor assemble_input(const Tensor& maps, std::size_t frame, std::size_t context) {
  if (maps.rank() != 3) throw DimensionError("feature maps must be (maps, frames, dims)");
  if (context % 2 == 0) throw DomainError("context window must be odd");
  const std::size_t n_maps = maps.dim(0), frames = maps.dim(1), dims = maps.dim(2);
  if (frame >= frames)
    throw IndexError("frame " + std::to_string(frame) + " out of range " + std::to_string(frames));
  const auto half = static_cast<std::ptrdiff_t>(context / 2);
  Tensor out({n_maps, context, dims});
  double* dst = out.data().data();
  for (std::size_t m = 0; m < n_maps; ++m)
    for (std::size_t c = 0; c < context; ++c) {
      const auto src_t = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
          static_cast<std::ptrdiff_t>(frame) + static_cast<std::ptrdiff_t>(c) - half, 0,
          static_cast<std::ptrdiff_t>(frames) - 1));
      const double* src = maps.data().data() + (m * frames + src_t) * dims;
      std::copy_n(src, dims, dst + (m * context + c) * dims);
    }
  return out;
}

/// Flattened context window over a (frames, dims) stream.
inline std::vector<double> window_frames(const Tensor& stream, std::size_t frame,
                                         std::size_t context) {
  Tensor w = assemble_input(stream.reshaped({1, stream.dim(0), stream.dim(1)}), frame, context);
  return w.values();
}

/// Full pipeline for one utterance.
inline Tensor extract_feature_maps(std::span<const double> waveform, const FrontendConfig& cfg) {
  return stack_feature_maps(compute_fbank(waveform, cfg), cfg);
}

// ---------------------------------------------------------------------------
// 16-bit mono PCM WAV

struct Waveform {
  double sample_rate = 16000.0;
  std::vector<double> samples;  // scaled to [-1, 1)
};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::ostream& os, std::uint16_t v) {
  os.put(static_cast<char>(v & 0xff));
  os.put(static_cast<char>(v >> 8));
}
inline std::uint32_t get_le(const std::vector<unsigned char>& b, std::size_t off, int n) {
  if (off + static_cast<std::size_t>(n) > b.size()) throw FormatError("truncated WAV file");
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}
}  // namespace detail

inline void write_wav(const std::string& path, const Waveform& wav) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  const auto n = static_cast<std::uint32_t>(wav.samples.size());
  const auto rate = static_cast<std::uint32_t>(wav.sample_rate);
  os.write("RIFF", 4);
  detail::put_u32(os, 36 + 2 * n);
  os.write("WAVEfmt ", 8);
  detail::put_u32(os, 16);
  detail::put_u16(os, 1);
  detail::put_u16(os, 1);
  detail::put_u32(os, rate);
  detail::put_u32(os, rate * 2);
  detail::put_u16(os, 2);
  detail::put_u16(os, 16);
  os.write("data", 4);
  detail::put_u32(os, 2 * n);
  for (double s : wav.samples) {
    const long q = std::lround(std::clamp(s, -1.0, 1.0) * 32767.0);
    detail::put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(is)), {});
  if (b.size() < 12 || std::string(b.begin(), b.begin() + 4) != "RIFF" ||
      std::string(b.begin() + 8, b.begin() + 12) != "WAVE")
    throw FormatError(path + " is not a RIFF/WAVE file");
  Waveform wav;
  bool have_fmt = false;
  std::size_t off = 12;
  while (off + 8 <= b.size()) {
    const std::string id(b.begin() + static_cast<std::ptrdiff_t>(off),
                         b.begin() + static_cast<std::ptrdiff_t>(off + 4));
    const std::uint32_t len = detail::get_le(b, off + 4, 4);
    const std::size_t body = off + 8;
    if (id == "fmt ") {
      const auto format = detail::get_le(b, body, 2), channels = detail::get_le(b, body + 2, 2);
      const auto bits = detail::get_le(b, body + 14, 2);
      if (format != 1 || channels != 1 || bits != 16)
        throw FormatError(path + ": only 16-bit mono PCM is supported");
      wav.sample_rate = detail::get_le(b, body + 4, 4);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(path + ": data chunk before fmt chunk");
      const std::size_t n = std::min<std::size_t>(len, b.size() - body) / 2;
      wav.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        wav.samples[i] =
            std::max(-1.0, static_cast<std::int16_t>(detail::get_le(b, body + 2 * i, 2)) / 32767.0);
      return wav;
    }
    off = body + len + (len & 1u);
  }
  throw FormatError(path + ": no data chunk");
}

}  // namespace vdcnn

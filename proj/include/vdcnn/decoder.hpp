// SPDX-License-Identifier: Apache-2.0
//
// Hybrid scoring: posteriors to scaled likelihoods, state-level fusion of two
// systems, Viterbi over a small HMM graph, and frame / word error scoring.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vdcnn/errors.hpp"
#include "vdcnn/tensor.hpp"

namespace vdcnn {

enum class ScoreKind { kLogPosterior, kLogLikelihood };

struct AcousticScores {
  Tensor matrix;  // (frames, n_states)
  ScoreKind kind = ScoreKind::kLogLikelihood;

  std::size_t frames() const { return matrix.dim(0); }
  std::size_t states() const { return matrix.dim(1); }
};

inline double logsumexp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Row-wise log-softmax of a (frames, n_states) logit matrix.
inline AcousticScores log_posteriors(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("logit matrix must be rank 2");
  Tensor out(logits.shape());
  const std::size_t n = logits.dim(1);
  for (std::size_t t = 0; t < logits.dim(0); ++t) {
    std::span<const double> row(logits.data().data() + t * n, n);
    const double z = logsumexp(row);
    for (std::size_t s = 0; s < n; ++s) out.at(t, s) = row[s] - z;
  }
  return {std::move(out), ScoreKind::kLogPosterior};
}

/// loglik[t,s] = scale * (log p(s|x_t) - log prior(s)).
inline AcousticScores posteriors_to_loglik(const AcousticScores& log_post,
                                           std::span<const double> log_priors, double scale = 1.0) {
  if (log_post.matrix.rank() != 2 || log_post.states() != log_priors.size())
    throw DimensionError("posterior matrix has " +
                         std::to_string(log_post.matrix.rank() == 2 ? log_post.states() : 0) +
                         " states but " + std::to_string(log_priors.size()) + " priors given");
  for (std::size_t s = 0; s < log_priors.size(); ++s)
    if (!std::isfinite(log_priors[s]))
      throw DomainError("prior of state " + std::to_string(s) + " is not strictly positive");
  Tensor out(log_post.matrix.shape());
  for (std::size_t t = 0; t < log_post.frames(); ++t)
    for (std::size_t s = 0; s < log_priors.size(); ++s)
      out.at(t, s) = scale * (log_post.matrix.at(t, s) - log_priors[s]);
  return {std::move(out), ScoreKind::kLogLikelihood};
}

struct FusionWeights {
  double w1 = 0.6;
  double w2 = 0.4;

  FusionWeights() = default;
  FusionWeights(double a, double b) : w1(a), w2(b) {
    if (!(a >= 0.0) || !(b >= 0.0) || std::abs(a + b - 1.0) > 1e-12)
      throw FusionError("fusion weights must be non-negative and sum to 1, got (" +
                        std::to_string(a) + ", " + std::to_string(b) + ")");
  }
};

inline AcousticScores fuse(const AcousticScores& a, const AcousticScores& b, FusionWeights w) {
  if (a.matrix.shape() != b.matrix.shape())
    throw FusionError("cannot fuse scores of shape " + shape_string(a.matrix.shape()) + " and " +
                      shape_string(b.matrix.shape()) + ": state inventories differ");
  if (a.kind != b.kind) throw FusionError("cannot fuse scores of different kinds");
  // w1 x + w2 y written as an interpolation from the heavier input, so that
  // (1,0), (0,1), identical inputs and swapped arguments are all exact.
  Tensor out(a.matrix.shape());
  const auto x = a.matrix.data(), y = b.matrix.data();
  auto o = out.data();
  if (w.w1 == w.w2)
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.5 * x[i] + 0.5 * y[i];
  else if (w.w1 > w.w2)
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + w.w2 * (y[i] - x[i]);
  else
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = y[i] + w.w1 * (x[i] - y[i]);
  return {std::move(out), a.kind};
}

struct DecodeGraph {
  std::size_t states = 0;
  std::vector<double> log_priors;  // state occupancy
  Tensor log_trans;                // (states, states), row = from-state
  std::vector<std::string> lexicon;  // word label emitted by a run of each state

  void check() const {
    if (log_priors.size() != states || log_trans.shape() != Shape{states, states} ||
        lexicon.size() != states)
      throw DimensionError("decode graph tables disagree on the state count");
  }
};

/// Self-loop probability `stay` on every state, the rest spread uniformly.
inline DecodeGraph make_toy_graph(const std::vector<double>& log_priors, double stay) {
  const std::size_t n = log_priors.size();
  if (n < 1) throw DimensionError("graph needs at least one state");
  if (!(stay > 0.0 && stay < 1.0) && n > 1) throw DomainError("self-loop probability must be in (0,1)");
  DecodeGraph g;
  g.states = n;
  g.log_priors = log_priors;
  g.log_trans = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      g.log_trans.at(i, j) =
          n == 1 ? 0.0 : std::log(i == j ? stay : (1.0 - stay) / static_cast<double>(n - 1));
  for (std::size_t s = 0; s < n; ++s) g.lexicon.push_back("w" + std::to_string(s));
  return g;
}

/// Add-one smoothed log relative frequencies.
inline std::vector<double> estimate_log_priors(const std::vector<std::uint32_t>& labels,
                                               std::size_t n_states) {
  std::vector<double> counts(n_states, 1.0);
  for (auto l : labels) {
    if (l >= n_states) throw IndexError("label " + std::to_string(l) + " out of range");
    counts[l] += 1.0;
  }
  const double total = static_cast<double>(labels.size() + n_states);
  std::vector<double> out;
  for (double c : counts) out.push_back(std::log(c / total));
  return out;
}

/// Average self-loop rate of consecutive labels within utterances.
inline double estimate_self_loop(const std::vector<std::vector<std::uint32_t>>& utts) {
  double same = 1.0, total = 2.0;
  for (const auto& u : utts)
    for (std::size_t t = 1; t < u.size(); ++t) {
      same += u[t] == u[t - 1] ? 1.0 : 0.0;
      total += 1.0;
    }
  return same / total;
}

struct ViterbiResult {
  std::vector<std::uint32_t> path;
  double score = 0.0;
};

/// Exact best path under sum_t score[t, s_t] + sum_t trans[s_{t-1}, s_t].
/// Ties resolve toward the lower state index at every step.
inline ViterbiResult viterbi(const AcousticScores& scores, const DecodeGraph& graph) {
  graph.check();
  const std::size_t T = scores.frames(), n = scores.states();
  if (T < 1) throw EmptyInputError("viterbi needs at least one frame");
  if (n != graph.states) throw DimensionError("scores and graph disagree on the state count");
  std::vector<double> delta(n), next(n);
  std::vector<std::uint32_t> back(T * n, 0);
  for (std::size_t s = 0; s < n; ++s) delta[s] = scores.matrix.at(0, s);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = delta[i] + graph.log_trans.at(i, j);
        if (v > best) {
          best = v;
          arg = static_cast<std::uint32_t>(i);
        }
      }
      next[j] = best + scores.matrix.at(t, j);
      back[t * n + j] = arg;
    }
    std::swap(delta, next);
  }
  ViterbiResult r;
  std::uint32_t s = 0;
  r.score = delta[0];
  for (std::size_t j = 1; j < n; ++j)
    if (delta[j] > r.score) {
      r.score = delta[j];
      s = static_cast<std::uint32_t>(j);
    }
  r.path.assign(T, 0);
  for (std::size_t t = T; t-- > 0;) {
    r.path[t] = s;
    if (t > 0) s = back[t * n + s];
  }
  return r;
}

/// Collapses runs of identical states and maps each run through the lexicon.
inline std::vector<std::string> path_to_words(const std::vector<std::uint32_t>& path,
                                              const std::vector<std::string>& lexicon) {
  std::vector<std::string> words;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (t > 0 && path[t] == path[t - 1]) continue;
    if (path[t] >= lexicon.size()) throw IndexError("state " + std::to_string(path[t]) + " not in lexicon");
    words.push_back(lexicon[path[t]]);
  }
  return words;
}

/// Levenshtein distance with unit substitution, deletion and insertion costs.
template <class T>
std::size_t edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

struct OutputScore {
  double frame_accuracy = 0.0;
  double wer = 0.0;
  std::size_t errors = 0;
  std::size_t ref_words = 0;
};

inline double frame_accuracy(const std::vector<std::uint32_t>& hyp,
                             const std::vector<std::uint32_t>& ref) {
  if (hyp.size() != ref.size())
    throw DimensionError("hypothesis has " + std::to_string(hyp.size()) + " frames, reference " +
                         std::to_string(ref.size()));
  if (ref.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t t = 0; t < ref.size(); ++t) hit += hyp[t] == ref[t];
  return static_cast<double>(hit) / static_cast<double>(ref.size());
}

/// Word error rate over word sequences.
template <class T>
double word_error_rate(const std::vector<T>& hyp, const std::vector<T>& ref) {
  if (ref.empty()) throw UndefinedMetricError("WER is undefined for an empty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

/// Frame accuracy over state labels and WER over the collapsed word strings.
inline OutputScore score_output(const std::vector<std::uint32_t>& hyp,
                                const std::vector<std::uint32_t>& ref,
                                const std::vector<std::string>& lexicon) {
  if (ref.empty()) throw UndefinedMetricError("WER is undefined for an empty reference");
  OutputScore s;
  s.frame_accuracy = frame_accuracy(hyp, ref);
  const auto rw = path_to_words(ref, lexicon), hw = path_to_words(hyp, lexicon);
  s.errors = edit_distance(rw, hw);
  s.ref_words = rw.size();
  s.wer = static_cast<double>(s.errors) / static_cast<double>(s.ref_words);
  return s;
}

}  // namespace vdcnn

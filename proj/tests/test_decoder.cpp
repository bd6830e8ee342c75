#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vdcnn/decoder.hpp"
#include "vdcnn/random.hpp"

using namespace vdcnn;

namespace {

AcousticScores random_scores(std::size_t T, std::size_t n, Rng& rng, ScoreKind k = ScoreKind::kLogLikelihood) {
  return {uniform_tensor({T, n}, -5, 0, rng), k};
}

DecodeGraph random_graph(std::size_t n, Rng& rng) {
  std::vector<double> priors(n, std::log(1.0 / static_cast<double>(n)));
  DecodeGraph g = make_toy_graph(priors, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n);
    for (auto& v : row) v = rng.uniform(-3, 0);
    const double z = logsumexp(row);
    for (std::size_t j = 0; j < n; ++j) g.log_trans.at(i, j) = row[j] - z;
  }
  return g;
}

std::vector<std::uint32_t> row_argmax(const Tensor& m) {
  std::vector<std::uint32_t> out;
  for (std::size_t t = 0; t < m.dim(0); ++t) {
    std::uint32_t best = 0;
    for (std::size_t s = 1; s < m.dim(1); ++s)
      if (m.at(t, s) > m.at(t, best)) best = static_cast<std::uint32_t>(s);
    out.push_back(best);
  }
  return out;
}

}  // namespace

TEST(LogPosteriors, RowsNormalise) {
  Rng rng(1);
  const auto lp = log_posteriors(uniform_tensor({10, 7}, -50, 50, rng));
  EXPECT_EQ(lp.kind, ScoreKind::kLogPosterior);
  for (std::size_t t = 0; t < 10; ++t) {
    std::span<const double> row(lp.matrix.data().data() + t * 7, 7);
    EXPECT_NEAR(logsumexp(row), 0.0, 1e-8);
  }
}

TEST(Loglik, UniformPriorsShiftByLogN) {
  Rng rng(2);
  const auto lp = log_posteriors(uniform_tensor({6, 4}, -3, 3, rng));
  const std::vector<double> priors(4, std::log(0.25));
  const auto ll = posteriors_to_loglik(lp, priors, 0.7);
  for (std::size_t i = 0; i < ll.matrix.size(); ++i)
    EXPECT_NEAR(ll.matrix[i], 0.7 * (lp.matrix[i] + std::log(4.0)), 1e-12);
  EXPECT_EQ(row_argmax(ll.matrix), row_argmax(lp.matrix));
}

TEST(Loglik, ZeroScaleAndDirectFormula) {
  Rng rng(3);
  const auto lp = log_posteriors(uniform_tensor({5, 3}, -3, 3, rng));
  EXPECT_EQ(posteriors_to_loglik(lp, std::vector<double>{-1, -2, -0.5}, 0.0).matrix.max_abs(), 0.0);
  const std::vector<double> priors = estimate_log_priors({0, 0, 1, 2, 2, 2}, 3);
  const auto ll = posteriors_to_loglik(lp, priors, 1.3);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(ll.matrix.at(t, s), 1.3 * (lp.matrix.at(t, s) - priors[s]), 1e-12);
}

TEST(Loglik, ZeroPriorIsDomainError) {
  const auto lp = log_posteriors(Tensor({2, 2}));
  EXPECT_THROW(posteriors_to_loglik(lp, std::vector<double>{-std::numeric_limits<double>::infinity(), 0.0}),
               DomainError);
  EXPECT_THROW(posteriors_to_loglik(lp, std::vector<double>{0.0}), DimensionError);
}

TEST(Priors, AddOneSmoothedAndNormalised) {
  const auto p = estimate_log_priors({1, 1, 1}, 3);
  EXPECT_NEAR(std::exp(p[0]), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(std::exp(p[1]), 4.0 / 6.0, 1e-15);
  double s = 0;
  for (double v : p) s += std::exp(v);
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_THROW(estimate_log_priors({3}, 3), IndexError);
  EXPECT_NEAR(estimate_self_loop({{0, 0, 0, 1}}), 3.0 / 5.0, 1e-15);
}

TEST(Graph, TransitionRowsNormalise) {
  const DecodeGraph g = make_toy_graph(std::vector<double>(5, std::log(0.2)), 0.8);
  for (std::size_t i = 0; i < 5; ++i) {
    std::span<const double> row(g.log_trans.data().data() + i * 5, 5);
    EXPECT_NEAR(logsumexp(row), 0.0, 1e-8);
  }
  EXPECT_EQ(g.lexicon[3], "w3");
  EXPECT_THROW(make_toy_graph({-1.0, -1.0}, 1.0), DomainError);
}

TEST(Fusion, WeightValidation) {
  EXPECT_NO_THROW(FusionWeights(0.6, 0.4));
  EXPECT_THROW(FusionWeights(0.7, 0.4), FusionError);
  EXPECT_THROW(FusionWeights(-0.1, 1.1), FusionError);
  const FusionWeights d;
  EXPECT_EQ(d.w1, 0.6);
  EXPECT_EQ(d.w2, 0.4);
}

TEST(Fusion, Identities) {
  Rng rng(4);
  const auto a = random_scores(9, 4, rng), b = random_scores(9, 4, rng);
  EXPECT_TRUE(fuse(a, b, {1.0, 0.0}).matrix == a.matrix);
  EXPECT_TRUE(fuse(a, b, {0.0, 1.0}).matrix == b.matrix);
  for (double w : {0.0, 0.1, 0.25, 0.5, 0.6, 0.9, 1.0}) {
    EXPECT_TRUE(fuse(a, a, {w, 1.0 - w}).matrix == a.matrix) << w;
    EXPECT_TRUE(fuse(a, b, {w, 1.0 - w}).matrix == fuse(b, a, {1.0 - w, w}).matrix);
  }
}

TEST(Fusion, DefaultWeightsMatchElementwiseFormula) {
  Rng rng(5);
  const auto a = random_scores(12, 6, rng), b = random_scores(12, 6, rng);
  const auto f = fuse(a, b, {0.6, 0.4});
  for (std::size_t i = 0; i < f.matrix.size(); ++i) EXPECT_NEAR(f.matrix[i], 0.6 * a.matrix[i] + 0.4 * b.matrix[i], 1e-12);
}

TEST(Fusion, ArgmaxInvariantToPerFrameShift) {
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    const auto a = random_scores(8, 5, rng), b = random_scores(8, 5, rng);
    auto as = a, bs = b;
    for (std::size_t t = 0; t < 8; ++t) {
      const double c = rng.uniform(-10, 10);
      for (std::size_t s = 0; s < 5; ++s) {
        as.matrix.at(t, s) += c;
        bs.matrix.at(t, s) += c;
      }
    }
    EXPECT_EQ(row_argmax(fuse(as, bs, {}).matrix), row_argmax(fuse(a, b, {}).matrix));
  }
}

TEST(Fusion, MismatchesAreFusionErrors) {
  Rng rng(7);
  EXPECT_THROW(fuse(random_scores(4, 3, rng), random_scores(4, 4, rng), {}), FusionError);
  EXPECT_THROW(fuse(random_scores(4, 3, rng), random_scores(4, 3, rng, ScoreKind::kLogPosterior), {}),
               FusionError);
}

TEST(Viterbi, SingleFrameIsArgmax) {
  Rng rng(8);
  const auto g = random_graph(5, rng);
  for (int k = 0; k < 10; ++k) {
    const auto s = random_scores(1, 5, rng);
    const auto r = viterbi(s, g);
    EXPECT_EQ(r.path, row_argmax(s.matrix));
    EXPECT_EQ(r.score, s.matrix.at(0, r.path[0]));
  }
}

TEST(Viterbi, UniformTransitionsGivePerFrameArgmax) {
  Rng rng(9);
  const std::size_t n = 4;
  DecodeGraph g = make_toy_graph(std::vector<double>(n, std::log(0.25)), 0.25);
  const auto s = random_scores(30, n, rng);
  EXPECT_EQ(viterbi(s, g).path, row_argmax(s.matrix));
}

TEST(Viterbi, MatchesExhaustiveSearch) {
  Rng rng(10);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng.index(5), T = 1 + rng.index(8);
    const auto g = random_graph(n, rng);
    const auto s = random_scores(T, n, rng);
    const auto r = viterbi(s, g);
    const auto ref = oracle::enumerate_paths(s.matrix, g.log_trans);
    ASSERT_EQ(r.path, ref.path) << "instance " << k;
    ASSERT_NEAR(r.score, ref.score, 1e-12);
  }
}

TEST(Viterbi, FiveStatesEightFramesFullEnumeration) {
  Rng rng(11);
  const auto g = random_graph(5, rng);
  const auto s = random_scores(8, 5, rng);
  const auto ref = oracle::enumerate_paths(s.matrix, g.log_trans);
  EXPECT_EQ(viterbi(s, g).path, ref.path);
}

TEST(Viterbi, TiesGoToLowerIndex) {
  const DecodeGraph g = make_toy_graph(std::vector<double>(3, std::log(1.0 / 3)), 0.5);
  const auto r = viterbi({Tensor({4, 3}), ScoreKind::kLogLikelihood}, g);
  EXPECT_EQ(r.path, (std::vector<std::uint32_t>{0, 0, 0, 0}));
  EXPECT_THROW(viterbi({Tensor({4, 2}), ScoreKind::kLogLikelihood}, g), DimensionError);
}

TEST(Scoring, IdenticalSequences) {
  const std::vector<std::uint32_t> ref{0, 0, 1, 1, 2};
  const auto s = score_output(ref, ref, {"a", "b", "c"});
  EXPECT_EQ(s.wer, 0.0);
  EXPECT_EQ(s.frame_accuracy, 1.0);
  EXPECT_EQ(s.ref_words, 3u);
}

TEST(Scoring, OneDeletionIsOneThird) {
  const std::vector<std::string> ref{"a", "b", "c"}, hyp{"a", "c"};
  EXPECT_EQ(edit_distance(ref, hyp), 1u);
  EXPECT_NEAR(word_error_rate(hyp, ref), 1.0 / 3.0, 1e-15);
  const auto s = score_output({0, 0, 2, 2}, {0, 1, 1, 2}, {"a", "b", "c"});
  EXPECT_EQ(s.errors, 1u);
  EXPECT_NEAR(s.wer, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.frame_accuracy, 0.5, 1e-15);
}

TEST(Scoring, EditDistanceMatchesRecursiveOracle) {
  Rng rng(12);
  for (int k = 0; k < 200; ++k) {
    std::vector<int> a(rng.index(8)), b(rng.index(8));
    for (auto& v : a) v = static_cast<int>(rng.index(3));
    for (auto& v : b) v = static_cast<int>(rng.index(3));
    ASSERT_EQ(edit_distance(a, b), oracle::edit_distance(a, b));
  }
}

TEST(Scoring, EmptyReferenceIsUndefined) {
  EXPECT_THROW(word_error_rate(std::vector<int>{1}, std::vector<int>{}), UndefinedMetricError);
  EXPECT_THROW(score_output({}, {}, {"a"}), UndefinedMetricError);
  EXPECT_THROW(frame_accuracy({1, 2}, {1}), DimensionError);
}

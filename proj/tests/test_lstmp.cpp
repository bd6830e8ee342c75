#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vdcnn/gradsuite.hpp"
#include "vdcnn/lstmp.hpp"

using namespace vdcnn;

namespace {

LstmpLayerParams zero_layer(std::size_t in, std::size_t cell, std::size_t proj) {
  Rng rng(1);
  auto p = LstmpLayerParams::init(in, cell, proj, false, rng);
  p.gates.zero();
  p.gate_bias.zero();
  p.projection.zero();
  return p;
}

// Gate rows are laid out [i, f, g, o] blocks of cell_dim.
void set_gate_bias(LstmpLayerParams& p, std::size_t block, double v) {
  for (std::size_t j = 0; j < p.cell_dim; ++j) p.gate_bias[block * p.cell_dim + j] = v;
}

std::vector<SequenceExample> toy_sequences(std::size_t n, std::size_t T, std::size_t dim,
                                           std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SequenceExample> out;
  for (std::size_t u = 0; u < n; ++u) {
    SequenceExample ex{"u" + std::to_string(u), Tensor({T, dim}), {}};
    std::uint32_t label = static_cast<std::uint32_t>(rng.index(classes));
    for (std::size_t t = 0; t < T; ++t) {
      if (rng.uniform(0, 1) < 0.15) label = static_cast<std::uint32_t>(rng.index(classes));
      ex.labels.push_back(label);
      for (std::size_t d = 0; d < dim; ++d)
        ex.frames.at(t, d) = (d % classes == label ? 1.0 : 0.0) + 0.3 * rng.normal();
    }
    out.push_back(std::move(ex));
  }
  return out;
}

double max_abs_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k) m = std::max(m, std::abs(a[i][k] - b[i][k]));
  return m;
}

}  // namespace

TEST(LstmpStep, ZeroEverythingGivesZero) {
  const auto p = zero_layer(3, 4, 2);
  const auto out = lstmp_step(p, std::vector<double>(3, 0.0), std::vector<double>(2, 0.0),
                              std::vector<double>(4, 0.0));
  for (double v : out.h) EXPECT_EQ(v, 0.0);
  for (double v : out.c) EXPECT_EQ(v, 0.0);
}

TEST(LstmpStep, SaturatedForgetCarriesMemory) {
  auto p = zero_layer(3, 4, 2);
  set_gate_bias(p, 0, -60.0);  // input gate shut
  set_gate_bias(p, 1, 60.0);   // forget gate open
  const std::vector<double> c_prev{0.7, -1.3, 2.0, 0.01};
  const auto out = lstmp_step(p, std::vector<double>{1, -2, 3}, std::vector<double>{0.5, 0.5}, c_prev);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.c[j], c_prev[j], 1e-12);
}

TEST(LstmpStep, ForcedGatesMakeAnIntegrator) {
  auto p = zero_layer(2, 2, 1);
  set_gate_bias(p, 0, 60.0);
  set_gate_bias(p, 1, 60.0);
  set_gate_bias(p, 3, 60.0);
  // candidate g_j = tanh(x_j)
  p.gates.at(2 * 2 + 0, 0) = 1.0;
  p.gates.at(2 * 2 + 1, 1) = 1.0;
  Rng rng(4);
  std::vector<double> h(1, 0.0), c(2, 0.0), sum(2, 0.0);
  for (int t = 0; t < 25; ++t) {
    const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (std::size_t j = 0; j < 2; ++j) sum[j] += std::tanh(x[j]);
    auto out = lstmp_step(p, x, h, c);
    h = out.h;
    c = out.c;
  }
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(c[j], sum[j], 1e-10);
}

TEST(LstmpStep, DimensionAndFiniteChecks) {
  Rng rng(1);
  auto p = LstmpLayerParams::init(3, 4, 2, false, rng);
  EXPECT_THROW(lstmp_step(p, std::vector<double>(2), std::vector<double>(2), std::vector<double>(4)),
               DimensionError);
  EXPECT_THROW(lstmp_step(p, std::vector<double>{std::nan(""), 0, 0}, std::vector<double>(2),
                          std::vector<double>(4)),
               DivergenceError);
  EXPECT_THROW(LstmpLayerParams::init(3, 4, 4, false, rng), DimensionError);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(p.gate_bias[4 + j], 1.0);
  EXPECT_EQ(p.parameter_tensors(), 3u);
  EXPECT_EQ(LstmpLayerParams::init(3, 4, 2, true, rng).parameter_tensors(), 6u);
}

TEST(LstmpStep, TinyCellFiniteDifferences) {
  for (const char* scope : {"lstmp", "lstmp-peephole"}) {
    const auto r = GradSuite({20, 1e-4, 17}).run(scope);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_TRUE(r[0].passed) << scope << " " << r[0].max_rel_error;
  }
}

TEST(LstmpModel, ProjectionWiresLayerInputs) {
  const LstmpModel m(LstmpConfig{40, 1024, 512, 3, 16, false}, 1);
  ASSERT_EQ(m.layers().size(), 3u);
  EXPECT_EQ(m.layers()[0].input_dim, 40u);
  EXPECT_EQ(m.layers()[1].input_dim, 512u);
  EXPECT_EQ(m.layers()[2].input_dim, 512u);
  EXPECT_EQ(m.layers()[0].gates.shape(), (Shape{4096, 552}));
}

TEST(LstmpModel, OneFrameWithoutDelay) {
  const LstmpModel m(LstmpConfig{4, 6, 3, 2, 5, false}, 2);
  Rng rng(3);
  const Tensor y = frame_logits(m, uniform_tensor({1, 4}, -1, 1, rng), 0);
  EXPECT_EQ(y.shape(), (Shape{1, 5}));
}

TEST(LstmpModel, ChunkingDoesNotChangeForwardOutputs) {
  Rng rng(5);
  for (bool peep : {false, true}) {
    const LstmpModel m(LstmpConfig{4, 6, 3, 3, 5, peep}, 7);
    const Tensor x = uniform_tensor({20, 4}, -1, 1, rng);
    const Tensor whole = forward_sequence(m, x, 20);
    EXPECT_TRUE(forward_sequence(m, x, 10) == whole);
    for (std::size_t chunk : {1u, 3u, 7u, 64u}) EXPECT_TRUE(forward_sequence(m, x, chunk) == whole) << chunk;
  }
}

TEST(LstmpModel, DelayedOutputsAlignWithFrames) {
  const std::vector<std::uint32_t> labels{3, 1, 2};
  EXPECT_EQ(delayed_targets(labels, 2), (std::vector<std::uint32_t>{3, 3, 3, 1, 2}));
  const Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor padded = delay_pad(x, 2);
  EXPECT_EQ(padded.shape(), (Shape{5, 2}));
  EXPECT_EQ(padded.at(4, 1), 6.0);
  const LstmpModel m(LstmpConfig{2, 4, 2, 1, 3, false}, 1);
  const Tensor raw = forward_sequence(m, padded, 20);
  const Tensor aligned = frame_logits(m, x, 2);
  EXPECT_TRUE(aligned == row_slice(raw, 2, 3));
}

TEST(Tbptt, SingleChunkEqualsFullBptt) {
  Rng rng(9);
  for (bool peep : {false, true}) {
    const LstmpModel m(LstmpConfig{3, 5, 2, 3, 4, peep}, 21);
    SequenceExample ex{"s", uniform_tensor({12, 3}, -1, 1, rng), {}};
    for (std::size_t t = 0; t < 12; ++t) ex.labels.push_back(static_cast<std::uint32_t>(rng.index(4)));
    const std::size_t delay = 3;
    auto tb = zeros_like(m.parameters());
    sequence_gradient(m, ex, 20, delay, tb);
    const auto full = oracle::full_bptt(m, delay_pad(ex.frames, delay), delayed_targets(ex.labels, delay));
    EXPECT_LT(max_abs_diff(tb, full), 1e-12);

    // with a short chunk the gradient is genuinely truncated
    auto trunc = zeros_like(m.parameters());
    sequence_gradient(m, ex, 4, delay, trunc);
    EXPECT_GT(max_abs_diff(trunc, full), 1e-6);
  }
}

TEST(Tbptt, AppliedGradientsStayInsideClipBounds) {
  auto corpus = toy_sequences(6, 30, 6, 3, 4);
  LstmpModel m(LstmpConfig{6, 8, 4, 2, 3, false}, 3);
  BpttConfig b{5, 3, -1e-3, 1e-3, true, 2};
  const auto stats = train_tbptt(m, corpus, b, {0.01, 0.9, 1, 1});
  EXPECT_GT(stats.updates, 0u);
  EXPECT_LE(stats.max_applied_gradient, 1e-3);
  b.clip_lo = b.clip_hi;
  EXPECT_THROW(train_tbptt(m, corpus, b, {0.01, 0.9, 1, 1}), DomainError);
}

TEST(Tbptt, ToyCrossEntropyFallsEveryEpoch) {
  const auto corpus = toy_sequences(12, 40, 6, 3, 8);
  LstmpModel m(LstmpConfig{6, 12, 6, 2, 3, false}, 5);
  const BpttConfig b{10, 4, -1, 1, true, 2};
  const auto stats = train_tbptt(m, corpus, b, {0.05, 0.9, 5, 2});
  ASSERT_EQ(stats.epoch_ce.size(), 6u);
  for (std::size_t e = 1; e < stats.epoch_ce.size(); ++e)
    EXPECT_LT(stats.epoch_ce[e], stats.epoch_ce[e - 1]) << "epoch " << e;
  EXPECT_LE(stats.max_applied_gradient, 1.0);
}

TEST(Tbptt, UnlabelledSequenceIsRejected) {
  auto corpus = toy_sequences(2, 5, 2, 2, 1);
  corpus[1].labels.pop_back();
  LstmpModel m(LstmpConfig{2, 4, 2, 1, 2, false}, 1);
  EXPECT_THROW(train_tbptt(m, corpus, BpttConfig{}, {}), DataError);
}

TEST(SpeakerAware, AppendsIvectorToEveryFrame) {
  Rng rng(2);
  const Tensor x = uniform_tensor({7, 40}, -1, 1, rng);
  const Tensor z = speaker_aware_input(x, std::vector<double>(100, 0.0));
  EXPECT_EQ(z.shape(), (Shape{7, 140}));
  for (std::size_t t = 0; t < 7; ++t) {
    for (std::size_t d = 0; d < 40; ++d) ASSERT_EQ(z.at(t, d), x.at(t, d));
    for (std::size_t d = 40; d < 140; ++d) ASSERT_EQ(z.at(t, d), 0.0);
  }
}

TEST(SpeakerAware, DifferentIvectorsChangeOutputs) {
  Rng rng(6);
  const Tensor x = uniform_tensor({6, 4}, -1, 1, rng);
  const LstmpModel m(LstmpConfig{4 + 5, 6, 3, 2, 3, false}, 4);
  const Tensor a = forward_sequence(m, speaker_aware_input(x, uniform_tensor({5}, -1, 1, rng).values()), 20);
  const Tensor b = forward_sequence(m, speaker_aware_input(x, uniform_tensor({5}, -1, 1, rng).values()), 20);
  EXPECT_FALSE(a == b);
}

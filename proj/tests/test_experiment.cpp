#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "vdcnn/experiment.hpp"

using namespace vdcnn;

namespace {

ToyCorpusConfig tiny_config(std::uint64_t seed = 3) {
  ToyCorpusConfig c;
  c.n_classes = 4;
  c.train_utterances = 8;
  c.test_utterances = 2;
  c.min_frames = 20;
  c.max_frames = 28;
  c.n_speakers = 2;
  c.seed = seed;
  return c;
}

struct Tiny {
  ToyCorpus corpus;
  FeatureArchives train, test;
};

const Tiny& tiny() {
  static const Tiny t = [] {
    Tiny x;
    x.corpus = synth_corpus(tiny_config());
    x.train = extract_features(x.corpus.train, 5);
    x.test = extract_features(x.corpus.test, 5);
    return x;
  }();
  return t;
}

SystemConfig small_system(ModelType type, const std::string& arch) {
  SystemConfig s;
  s.type = type;
  s.arch = arch;
  s.catalog = {8, 32, 4};
  s.aux_hidden = 8;
  s.train.epochs = 1;
  s.train.batch = 32;
  s.lstmp = {40, 8, 4, 1, 4, false};
  s.bptt = {10, 4, -1, 1, true, 2};
  return s;
}

const Checkpoint& vd6_checkpoint() {
  static const Checkpoint c = train_system(small_system(ModelType::kFeedForward, "vd6"), tiny().train).checkpoint;
  return c;
}

void expect_same_report(const RunReport& a, const RunReport& b) {
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(a.cells[c].utterances, b.cells[c].utterances);
    EXPECT_EQ(a.cells[c].frame_accuracy, b.cells[c].frame_accuracy);
    EXPECT_EQ(a.cells[c].wer, b.cells[c].wer);
  }
  EXPECT_EQ(a.average.frame_accuracy, b.average.frame_accuracy);
  EXPECT_EQ(a.average.wer, b.average.wer);
}

}  // namespace

TEST(Corpus, ConditionGridAndIds) {
  const auto& c = tiny().corpus;
  ASSERT_EQ(c.train.size(), 8u);
  ASSERT_EQ(c.test.size(), 8u);
  for (std::size_t i = 0; i < c.train.size(); ++i) EXPECT_EQ(c.train[i].condition, kConditions[i % 4]);
  for (std::size_t i = 0; i < c.test.size(); ++i) {
    EXPECT_EQ(c.test[i].condition, kConditions[i % 4]);
    EXPECT_EQ(c.test[i].labels, c.test[i - i % 4].labels);
    const auto [spk, cond] = parse_utterance_id(c.test[i].id);
    EXPECT_EQ(spk, c.test[i].speaker);
    EXPECT_EQ(cond, c.test[i].condition);
  }
  EXPECT_EQ(utterance_id("test", 12, 3, 'C'), "test-0012-s3-C");
  EXPECT_THROW(parse_utterance_id("test-0012-x3-C"), DataError);
  EXPECT_THROW(parse_utterance_id("test-0012-s3-Q"), DataError);
}

TEST(Corpus, LabelsCoverEveryFrameAndClass) {
  const auto& c = tiny().corpus;
  for (const auto& u : c.train) {
    const FrontendConfig fe;
    EXPECT_EQ(u.labels.size(), 1 + (u.samples.size() - fe.frame_samples()) / fe.shift_samples()) << u.id;
    EXPECT_GE(u.labels.size(), 20u);
    EXPECT_LE(u.labels.size(), 28u);
    for (auto l : u.labels) EXPECT_LT(l, 4u);
  }
}

TEST(Corpus, InfiniteSnrLeavesNoisyEqualToClean) {
  auto cfg = tiny_config();
  cfg.snr_db = {std::numeric_limits<double>::infinity()};
  cfg.train_utterances = 0;
  const auto c = synth_corpus(cfg);
  for (std::size_t i = 0; i < c.test.size(); i += 4) {
    EXPECT_EQ(c.test[i + 1].samples, c.test[i].samples);
    EXPECT_EQ(c.test[i + 3].samples, c.test[i + 2].samples);
  }
  cfg.snr_db = {std::nan("")};
  EXPECT_THROW(synth_corpus(cfg), DomainError);
}

TEST(Corpus, MeasuredSnrMatchesRequest) {
  Rng rng(1);
  std::vector<double> x(8000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.01 * static_cast<double>(i)) * 0.3;
  for (double snr : {10.0, 15.0, 20.0}) EXPECT_NEAR(measured_snr_db(x, add_noise(x, snr, rng)), snr, 0.5);
  const auto& c = tiny().corpus;
  for (std::size_t i = 0; i < c.test.size(); i += 4) {
    EXPECT_NEAR(measured_snr_db(c.test[i].samples, c.test[i + 1].samples), c.test[i + 1].snr_db, 0.5);
    EXPECT_NEAR(measured_snr_db(c.test[i + 2].samples, c.test[i + 3].samples), c.test[i + 3].snr_db, 0.5);
  }
}

TEST(Corpus, ChannelFilterIsCausalFir) {
  const std::vector<double> h{0.5, 0.25};
  EXPECT_EQ(apply_channel(std::vector<double>{1, 0, 0, 2}, h), (std::vector<double>{0.5, 0.25, 0, 1.0}));
}

TEST(Corpus, SameSeedGivesIdenticalArchives) {
  const auto a = synth_corpus(tiny_config(11)), b = synth_corpus(tiny_config(11)), c = synth_corpus(tiny_config(12));
  EXPECT_EQ(serialize_archive(wave_archive(a.train)), serialize_archive(wave_archive(b.train)));
  EXPECT_EQ(serialize_archive(wave_archive(a.test)), serialize_archive(wave_archive(b.test)));
  EXPECT_NE(serialize_archive(wave_archive(a.train)), serialize_archive(wave_archive(c.train)));
  const auto fa = extract_features(a.train, 5), fb = extract_features(b.train, 5);
  EXPECT_EQ(serialize_archive(fa.fbank40), serialize_archive(fb.fbank40));
  EXPECT_EQ(serialize_archive(fa.ivector), serialize_archive(fb.ivector));
}

TEST(Corpus, WaveArchiveRoundTrip) {
  const auto& c = tiny().corpus;
  const std::string bytes = serialize_archive(wave_archive(c.test));
  const auto back = from_wave_archive(deserialize_archive(bytes));
  ASSERT_EQ(back.size(), c.test.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].samples, c.test[i].samples);
    EXPECT_EQ(back[i].labels, c.test[i].labels);
    EXPECT_EQ(back[i].condition, c.test[i].condition);
  }
  EXPECT_EQ(serialize_archive(wave_archive(back)), bytes);
}

TEST(Features, ArchivesLineUp) {
  const auto& f = tiny().train;
  ASSERT_EQ(f.fbank40.records.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& r = f.fbank40.records[i];
    EXPECT_EQ(r.n_maps, 3u);
    EXPECT_EQ(r.dims, 40u);
    EXPECT_EQ(f.fbank64.records[i].dims, 64u);
    EXPECT_EQ(f.mfcc.records[i].dims, 39u);
    EXPECT_EQ(f.fmllr.records[i].frames, r.frames);
    EXPECT_EQ(f.ivector.records[i].dims, 100u);
  }
  const FrameDataset d(f, {1, 11, 40}, AuxKind::kFmllrIvector);
  EXPECT_EQ(d.sample(0).maps.shape(), (Shape{1, 11, 40}));
  EXPECT_EQ(d.sample(0).aux.size(), 540u);
  EXPECT_THROW(FrameDataset(f, {2, 11, 40}), DimensionError);
}

TEST(Report, AverageIsUtteranceWeighted) {
  std::array<ConditionCell, 4> cells{{{2, 0.5, 0.1}, {1, 0.8, 0.4}, {1, 0.2, 0.0}, {0, 0.0, 0.0}}};
  const auto avg = RunReport::weighted_average(cells);
  EXPECT_EQ(avg.utterances, 4u);
  EXPECT_NEAR(avg.frame_accuracy, (2 * 0.5 + 0.8 + 0.2) / 4, 1e-15);
  EXPECT_NEAR(avg.wer, (2 * 0.1 + 0.4) / 4, 1e-15);
}

TEST(Report, DecodedAverageRecomputesFromCells) {
  const RunReport r = evaluate_system(vd6_checkpoint(), tiny().test);
  const auto again = RunReport::weighted_average(r.cells);
  EXPECT_EQ(r.average.frame_accuracy, again.frame_accuracy);
  EXPECT_EQ(r.average.wer, again.wer);
  for (const auto& c : r.cells) EXPECT_EQ(c.utterances, 2u);
  EXPECT_EQ(format_report(r), format_report(evaluate_system(vd6_checkpoint(), tiny().test)));
  EXPECT_NE(format_report(r).find("metric\tA\tB\tC\tD\tAVG"), std::string::npos);
}

TEST(Checkpoint, RoundTripsBytesAndLogits) {
  const Checkpoint& c = vd6_checkpoint();
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  const FrameDataset d(tiny().test, {1, 11, 40});
  EXPECT_TRUE(utterance_logits(restore_ffnet(back), d, 0) == utterance_logits(restore_ffnet(c), d, 0));
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), FormatError);
  EXPECT_THROW(restore_lstmp(c), Error);
}

TEST(JointDecode, WeightOneReproducesSystemOne) {
  const auto other = train_system([] {
    auto s = small_system(ModelType::kFeedForward, "vd6");
    s.seed = 9;
    return s;
  }(), tiny().train).checkpoint;
  const auto r = run_joint_decode(vd6_checkpoint(), other, tiny().test, {1.0, 0.0});
  expect_same_report(r.fused, r.system1);
  EXPECT_EQ(r.fused.system, "vd6(x)vd6");
}

TEST(JointDecode, SelfFusionEqualsSingleSystem) {
  const auto r = run_joint_decode(vd6_checkpoint(), vd6_checkpoint(), tiny().test, {0.6, 0.4});
  const auto single = evaluate_system(vd6_checkpoint(), tiny().test);
  EXPECT_NEAR(r.fused.average.frame_accuracy, single.average.frame_accuracy, 1e-12);
  EXPECT_NEAR(r.fused.average.wer, single.average.wer, 1e-12);
  expect_same_report(r.system1, single);
}

TEST(JointDecode, StateMismatchIsFusionError) {
  Checkpoint c = vd6_checkpoint();
  c.log_priors.push_back(-1.0);
  EXPECT_THROW(run_joint_decode(vd6_checkpoint(), c, tiny().test, {}), FusionError);
}

TEST(ScoreArchive, RoundTripIsByteIdentical) {
  const ScoreSet s = score_system(vd6_checkpoint(), tiny().test);
  const std::string bytes = serialize_archive(score_archive(s));
  const ScoreSet back = from_score_archive(deserialize_archive(bytes));
  ASSERT_EQ(back.size(), s.size());
  EXPECT_TRUE(back[3].loglik.matrix == s[3].loglik.matrix);
  EXPECT_EQ(serialize_archive(score_archive(back)), bytes);
  EXPECT_THROW(from_score_archive(tiny().train.fbank40), DataError);
}

TEST(Systems, DnnBaselineRunsEndToEnd) {
  auto cfg = small_system(ModelType::kFeedForward, "dnn");
  const auto t = train_system(cfg, tiny().train, &tiny().test);
  EXPECT_EQ(t.epoch_ce.size(), 2u);
  EXPECT_EQ(t.heldout_ce.size(), 2u);
  EXPECT_EQ(t.checkpoint.get("name"), "dnn");
  const auto r = evaluate_system(t.checkpoint, tiny().test);
  EXPECT_EQ(r.average.utterances, 8u);
}

TEST(Systems, JointFmllrIvectorAcceptsFiveHundredFortyDims) {
  const auto t = train_system(small_system(ModelType::kJoint, "vd6"), tiny().train);
  EXPECT_EQ(t.checkpoint.get_size("aux_dim"), 540u);
  EXPECT_EQ(restore_joint(deserialize_checkpoint(serialize_checkpoint(t.checkpoint))).spec().aux_dim, 540u);
  EXPECT_EQ(evaluate_system(t.checkpoint, tiny().test).average.utterances, 8u);
}

TEST(Systems, LstmpAndSpeakerAwareRunEndToEnd) {
  for (bool ivec : {false, true}) {
    auto cfg = small_system(ModelType::kLstmp, "");
    cfg.speaker_aware = ivec;
    const auto t = train_system(cfg, tiny().train);
    EXPECT_EQ(t.checkpoint.get("name"), ivec ? "lstmp-ivec" : "lstmp");
    EXPECT_EQ(restore_lstmp(t.checkpoint).config().input_dim, ivec ? 140u : 40u);
    EXPECT_EQ(evaluate_system(t.checkpoint, tiny().test).average.utterances, 8u);
  }
}

TEST(Systems, DivergenceNamesTheEpoch) {
  FeedForwardNet net = build_network(find_architecture("vd6", {8, 32, 4}), 1, 8);
  net.parameters().back()->values()[0] = std::nan("");
  const FrameDataset d(tiny().train, {1, 11, 40});
  try {
    train_frames(net, d, {});
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
}

TEST(ConfigHash, DeterministicAndSensitive) {
  const auto a = small_system(ModelType::kFeedForward, "vd6");
  auto b = a;
  EXPECT_EQ(config_hash(a.describe()), config_hash(b.describe()));
  EXPECT_EQ(config_hash(a.describe()).size(), 16u);
  b.seed = 2;
  EXPECT_NE(config_hash(a.describe()), config_hash(b.describe()));
  b = a;
  b.arch = "vd10";
  EXPECT_NE(config_hash(a.describe()), config_hash(b.describe()));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
}

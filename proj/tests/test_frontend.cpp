#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "oracles.hpp"
#include "vdcnn/archive.hpp"
#include "vdcnn/frontend.hpp"
#include "vdcnn/random.hpp"

using namespace vdcnn;

namespace {

std::vector<double> tone(double hz, double amp, std::size_t n, double rate = 16000.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  return x;
}

std::size_t argmax_row(const Tensor& fb, std::size_t t) {
  std::size_t best = 0;
  for (std::size_t m = 1; m < fb.dim(1); ++m)
    if (fb.at(t, m) > fb.at(t, best)) best = m;
  return best;
}

}  // namespace

TEST(Fbank, FrameCountAndShape) {
  FrontendConfig cfg;
  const Tensor fb = compute_fbank(tone(500, 0.5, 16000), cfg);
  EXPECT_EQ(fb.dim(0), 1 + (16000 - 400) / 160u);
  EXPECT_EQ(fb.dim(1), 40u);
  EXPECT_THROW(compute_fbank(std::vector<double>(399), cfg), EmptyInputError);
}

TEST(Fbank, ToneEnergyPeaksNearItsMelBand) {
  FrontendConfig cfg;
  const auto centers = mel_center_frequencies(cfg);
  std::size_t nearest = 0;
  for (std::size_t m = 0; m < centers.size(); ++m)
    if (std::abs(centers[m] - 1000.0) < std::abs(centers[nearest] - 1000.0)) nearest = m;
  const Tensor fb = compute_fbank(tone(1000, 0.5, 8000), cfg);
  for (std::size_t t = 0; t < fb.dim(0); ++t) {
    const std::size_t peak = argmax_row(fb, t);
    EXPECT_LE(peak > nearest ? peak - nearest : nearest - peak, 1u) << "frame " << t;
  }
}

TEST(Fbank, SilenceHitsTheFloor) {
  const Tensor fb = compute_fbank(std::vector<double>(1600, 0.0), FrontendConfig{});
  for (double v : fb.values()) EXPECT_EQ(v, std::log(kLogFloor));
}

TEST(Fbank, DoublingAmplitudeAddsLogFour) {
  FrontendConfig cfg;
  Rng rng(4);
  std::vector<double> x(4000);
  for (auto& v : x) v = 0.2 * rng.normal();
  std::vector<double> y = x;
  for (auto& v : y) v *= 2.0;
  const Tensor a = compute_fbank(x, cfg), b = compute_fbank(y, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i] - a[i], std::log(4.0), 1e-9);
}

TEST(Mfcc, ConstantRowGivesScaledFirstCoefficient) {
  const std::size_t n = 40;
  const double c = 2.5;
  const Tensor m = compute_mfcc(Tensor({3, n}, c), 13);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_NEAR(m.at(t, 0), c * std::sqrt(static_cast<double>(n)), 1e-10);
    for (std::size_t k = 1; k < 13; ++k) EXPECT_NEAR(m.at(t, k), 0.0, 1e-10);
  }
  EXPECT_THROW(compute_mfcc(Tensor({3, 8}), 13), DimensionError);
}

TEST(Mfcc, MatchesDirectFormula) {
  Rng rng(7);
  const Tensor fb = uniform_tensor({20, 40}, -10, 5, rng);
  const Tensor m = compute_mfcc(fb, 13);
  for (std::size_t t = 0; t < 20; ++t) {
    std::vector<double> row(fb.values().begin() + static_cast<std::ptrdiff_t>(t * 40),
                            fb.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * 40));
    const auto ref = oracle::dct2_ortho(row, 13);
    for (std::size_t k = 0; k < 13; ++k) ASSERT_NEAR(m.at(t, k), ref[k], 1e-10);
  }
}

TEST(Deltas, ConstantStreamHasZeroDeltas) {
  const auto [d, dd] = compute_deltas(Tensor({12, 5}, 3.0), 2);
  EXPECT_EQ(d.max_abs(), 0.0);
  EXPECT_EQ(dd.max_abs(), 0.0);
}

TEST(Deltas, RampHasConstantInteriorSlope) {
  Tensor x({20, 2});
  for (std::size_t t = 0; t < 20; ++t) {
    x.at(t, 0) = 0.5 * static_cast<double>(t);
    x.at(t, 1) = -2.0 * static_cast<double>(t) + 1.0;
  }
  const auto [d, dd] = compute_deltas(x, 2);
  for (std::size_t t = 2; t + 2 < 20; ++t) {
    EXPECT_NEAR(d.at(t, 0), 0.5, 1e-12);
    EXPECT_NEAR(d.at(t, 1), -2.0, 1e-12);
  }
  EXPECT_THROW(compute_deltas(x, 0), DomainError);
}

TEST(Deltas, MatchOracleAndIgnoreOffsets) {
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const std::size_t T = 1 + rng.index(30), W = 1 + rng.index(3);
    const Tensor x = uniform_tensor({T, 6}, -3, 3, rng);
    const auto [d, dd] = compute_deltas(x, W);
    const Tensor rd = oracle::delta(x, W), rdd = oracle::delta(rd, W);
    for (std::size_t k = 0; k < d.size(); ++k) {
      ASSERT_NEAR(d[k], rd[k], 1e-10);
      ASSERT_NEAR(dd[k], rdd[k], 1e-10);
    }
    Tensor shifted = x;
    for (auto& v : shifted.values()) v += 7.25;
    const auto [ds, dds] = compute_deltas(shifted, W);
    for (std::size_t k = 0; k < d.size(); ++k) ASSERT_NEAR(ds[k], d[k], 1e-10);
  }
}

TEST(Normalization, ZeroMeanUnitVariance) {
  Rng rng(9);
  Tensor x = uniform_tensor({50, 4}, 2, 9, rng);
  for (std::size_t t = 0; t < 50; ++t) x.at(t, 3) = 4.0;
  normalize_mean_variance(x);
  for (std::size_t j = 0; j < 4; ++j) {
    double m = 0, v = 0;
    for (std::size_t t = 0; t < 50; ++t) m += x.at(t, j);
    m /= 50;
    for (std::size_t t = 0; t < 50; ++t) v += (x.at(t, j) - m) * (x.at(t, j) - m);
    v /= 50;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, j == 3 ? 0.0 : 1.0, 1e-12);
  }
}

TEST(Maps, ThreeMapStackHasDeltaStreams) {
  FrontendConfig cfg;
  cfg.map_mode = MapMode::kStaticDelta3;
  const Tensor maps = extract_feature_maps(tone(700, 0.3, 8000), cfg);
  EXPECT_EQ(maps.dim(0), 3u);
  EXPECT_EQ(maps.dim(2), 40u);
  cfg.map_mode = MapMode::kStatic1;
  EXPECT_EQ(extract_feature_maps(tone(700, 0.3, 8000), cfg).dim(0), 1u);
}

TEST(Assemble, ShapeAndEdgeReplication) {
  Rng rng(5);
  const Tensor maps = uniform_tensor({3, 30, 40}, -1, 1, rng);
  const Tensor w = assemble_input(maps, 0, 11);
  EXPECT_EQ(w.shape(), (Shape{3, 11, 40}));
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t c = 0; c < 11; ++c)
      for (std::size_t f = 0; f < 40; ++f) {
        const std::size_t src = c < 5 ? 0 : c - 5;
        ASSERT_EQ(w.at(m, c, f), maps.at(m, src, f));
      }
  const Tensor last = assemble_input(maps, 29, 11);
  for (std::size_t c = 5; c < 11; ++c) EXPECT_EQ(last.at(1, c, 7), maps.at(1, 29, 7));
  const Tensor mid = assemble_input(maps, 15, 11);
  for (std::size_t c = 0; c < 11; ++c) EXPECT_EQ(mid.at(2, c, 3), maps.at(2, 10 + c, 3));
  EXPECT_THROW(assemble_input(maps, 30, 11), IndexError);
  EXPECT_THROW(assemble_input(maps, 3, 10), DomainError);
}

TEST(Archive, RoundTripIsByteIdentical) {
  Rng rng(1);
  Archive ar{"fbank", {}};
  for (int i = 0; i < 3; ++i) {
    UtteranceFeatures u;
    u.id = "utt-" + std::to_string(i);
    u.maps = uniform_tensor({3, 5 + static_cast<std::size_t>(i), 4}, -1, 1, rng);
    u.aux = {0.5, -1.25};
    u.labels.assign(u.maps.dim(1), static_cast<std::uint32_t>(i));
    ar.records.push_back(to_record(u));
  }
  ar.records.push_back(aux_record("spk", 0, 3, {1, 2, 3}));
  const std::string bytes = serialize_archive(ar);
  const Archive back = deserialize_archive(bytes);
  EXPECT_EQ(serialize_archive(back), bytes);
  ASSERT_EQ(back.records.size(), 4u);
  const UtteranceFeatures u = to_features(back.records[1]);
  EXPECT_TRUE(u.maps == to_features(ar.records[1]).maps);
  EXPECT_EQ(u.labels, ar.records[1].labels.value());
  ASSERT_NE(back.find("spk"), nullptr);
  EXPECT_EQ(back.find("spk")->aux, (std::vector<double>{1, 2, 3}));
}

TEST(Archive, CorruptInputsAreRejected) {
  Archive ar{"fbank", {aux_record("a", 2, 1, {1, 2})}};
  const std::string bytes = serialize_archive(ar);
  EXPECT_THROW(deserialize_archive("NOTMAGIC" + bytes.substr(8)), FormatError);
  EXPECT_THROW(deserialize_archive(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(aux_record("b", 2, 2, {1, 2, 3}), DimensionError);

  ArchiveRecord r;
  r.id = "bad";
  r.n_maps = 1;
  r.frames = 2;
  r.dims = 1;
  r.data = {1, 2};
  r.labels = std::vector<std::uint32_t>{0};
  EXPECT_THROW(to_features(r), DataError);
}

TEST(Wav, WriteReadRoundTripWithinQuantisation) {
  const auto path = std::filesystem::temp_directory_path() / "vdcnn_test_tone.wav";
  Waveform w{16000.0, tone(440, 0.8, 3000)};
  write_wav(path.string(), w);
  const Waveform back = read_wav(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(back.sample_rate, 16000.0);
  ASSERT_EQ(back.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    ASSERT_NEAR(back.samples[i], w.samples[i], 1.0 / 32767.0);
}

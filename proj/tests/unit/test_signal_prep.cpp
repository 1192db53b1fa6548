#include "lagcoder/error.hpp"
#include "lagcoder/signal_prep.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace lagcoder;

namespace {

std::vector<double> sine(double hz, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / fs);
  return x;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Drops the edges, where the wavelet support leaves the series.
std::vector<double> interior(const std::vector<double>& v, std::size_t margin) {
  return {v.begin() + static_cast<std::ptrdiff_t>(margin), v.end() - static_cast<std::ptrdiff_t>(margin)};
}

double variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Despike, ConstantSignalUnchanged) {
  const std::vector<double> x{5, 5, 5, 5};
  const auto r = despike(x, 4.0);
  EXPECT_EQ(r.signal, x);
  EXPECT_TRUE(r.spikes.empty());
}

TEST(Despike, SpikeOnSineReplacedByInterpolation) {
  const double fs = 100.0;
  auto x = sine(1.0, fs, 400);
  const std::size_t idx = 137;
  const double clean = x[idx];
  x[idx] = 100.0;
  const auto r = despike(x, 4.0);
  ASSERT_EQ(r.spikes.size(), 1u);
  EXPECT_EQ(r.spikes[0], idx);
  EXPECT_NEAR(r.signal[idx], clean, 0.01);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i != idx) EXPECT_EQ(r.signal[i], x[i]);
  }
}

TEST(Despike, CleanSignalIsIdentity) {
  const auto x = sine(3.0, 200.0, 1000);
  const auto r = despike(x, 4.0);
  EXPECT_EQ(r.signal, x);
  EXPECT_TRUE(r.spikes.empty());
}

TEST(Despike, EdgeSpikeHoldsNearestCleanValue) {
  auto x = sine(1.0, 100.0, 200);
  x[0] = -80.0;
  const auto r = despike(x, 4.0);
  ASSERT_EQ(r.spikes.size(), 1u);
  EXPECT_EQ(r.signal[0], x[1]);
}

TEST(Car, OppositeElectrodesUnchanged) {
  MatrixD s(2, 50);
  const auto v = lagcoder::testing::gaussian_vector(50, 1);
  s.row(0) = v.transpose();
  s.row(1) = -v.transpose();
  EXPECT_TRUE(common_average_reference(s).isApprox(s, 1e-15));
}

TEST(Car, IdenticalElectrodesBecomeZero) {
  MatrixD s(2, 50);
  const auto v = lagcoder::testing::gaussian_vector(50, 2);
  s.row(0) = v.transpose();
  s.row(1) = v.transpose();
  EXPECT_EQ(common_average_reference(s).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Car, ColumnMeansVanish) {
  const MatrixD s = lagcoder::testing::gaussian_matrix(4, 1000, 3) * 50.0;
  const MatrixD c = common_average_reference(s);
  EXPECT_LT(c.colwise().mean().cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Car, SingleElectrodeRejected) {
  try {
    common_average_reference(MatrixD::Ones(1, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewElectrodes);
  }
}

TEST(HighGamma, InBandSineDominatesLowFrequencySine) {
  PreprocessConfig cfg;
  cfg.normalize_per_frequency = false;  // compare absolute power
  const double fs = 512.0;
  const auto hi = highgamma_power(sine(100.0, fs, 4096), fs, cfg);
  const auto lo = highgamma_power(sine(30.0, fs, 4096), fs, cfg);
  EXPECT_GE(median_of(interior(hi, 256)), 10.0 * median_of(interior(lo, 256)));
}

TEST(HighGamma, LineFrequencyExcluded) {
  PreprocessConfig cfg;  // per-frequency normalisation on (default)
  const double fs = 512.0;
  const std::size_t n = 8192;
  Rng rng(11);
  std::vector<double> noise(n), line = sine(120.0, fs, n);
  for (auto& v : noise) v = 1e-3 * standard_normal(rng);
  const auto p_line = highgamma_power(line, fs, cfg);
  const auto p_noise = highgamma_power(noise, fs, cfg);
  const double a = median_of(interior(p_line, 512));
  const double b = median_of(interior(p_noise, 512));
  EXPECT_LT(std::abs(a - b), 0.2 * b);
  for (double f : wavelet_frequencies(cfg)) {
    for (double l : cfg.line_noise_hz) EXPECT_GT(std::abs(f - l), cfg.line_exclusion_halfwidth_hz);
  }
}

TEST(HighGamma, ZeroSignalGivesZeroPower) {
  const PreprocessConfig cfg;
  const auto p = highgamma_power(std::vector<double>(2048, 0.0), 512.0, cfg);
  for (double v : p) EXPECT_EQ(v, 0.0);
}

TEST(HighGamma, NyquistAndEmptyBandErrors) {
  PreprocessConfig cfg;
  try {
    highgamma_power(std::vector<double>(100, 1.0), 300.0, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NyquistViolation);
  }
  cfg.band_lo_hz = 58.0;
  cfg.band_hi_hz = 62.0;
  try {
    highgamma_power(std::vector<double>(100, 1.0), 512.0, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyBand);
  }
}

TEST(Smooth, ConstantSeriesUnchanged) {
  const std::vector<double> x(300, 2.5);
  for (double v : hamming_smooth(x, 50.0, 512.0)) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(Smooth, ImpulseMassConserved) {
  std::vector<double> x(1001, 0.0);
  x[500] = 1.0;
  const auto y = hamming_smooth(x, 50.0, 512.0);
  EXPECT_NEAR(std::accumulate(y.begin(), y.end(), 0.0), 1.0, 1e-9);
}

TEST(Smooth, WhiteNoiseVarianceDrops) {
  const auto v = lagcoder::testing::gaussian_vector(5000, 9);
  const std::vector<double> x(v.data(), v.data() + v.size());
  EXPECT_LT(variance(hamming_smooth(x, 50.0, 512.0)), variance(x));
}

TEST(Preprocess, ThreeElectrodeRecordingStaysFiniteAndShaped) {
  SignalRecording rec;
  rec.sample_rate = 512.0;
  rec.samples = lagcoder::testing::gaussian_matrix(3, 2048, 5).cast<float>();
  rec.samples(1, 700) = 400.0f;  // a spike for despiking
  const auto r = preprocess_recording(rec, PreprocessConfig{}, 1);
  EXPECT_EQ(r.recording.samples.rows(), 3);
  EXPECT_EQ(r.recording.samples.cols(), 2048);
  EXPECT_TRUE(r.recording.samples.allFinite());
  EXPECT_EQ(r.provenance.rfind("preprocess:despike,car,highgamma,smooth;", 0), 0u);
  ASSERT_EQ(r.spikes_per_electrode.size(), 3u);
  EXPECT_GE(r.spikes_per_electrode[1], 1u);
}

TEST(Preprocess, StageSubsetAndOrder) {
  PreprocessConfig cfg;
  cfg.stages = {PreprocessStage::Smooth, PreprocessStage::Car};
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidStageOrder);
  }
  cfg.stages = {PreprocessStage::Car};
  SignalRecording rec;
  rec.sample_rate = 100.0;
  rec.samples = lagcoder::testing::gaussian_matrix(2, 64, 1).cast<float>();
  const auto r = preprocess_recording(rec, cfg, 1);
  EXPECT_LT(r.recording.samples.cast<double>().colwise().sum().cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Preprocess, ParallelMatchesSerial) {
  SignalRecording rec;
  rec.sample_rate = 512.0;
  rec.samples = lagcoder::testing::gaussian_matrix(5, 1024, 8).cast<float>();
  const auto a = preprocess_recording(rec, PreprocessConfig{}, 1);
  const auto b = preprocess_recording(rec, PreprocessConfig{}, 3);
  EXPECT_TRUE(a.recording.samples == b.recording.samples);
}

#include "lagcoder/controls.hpp"
#include "lagcoder/error.hpp"
#include "lagcoder/stats.hpp"
#include "lagcoder/synth.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>

using namespace lagcoder;
using lagcoder::testing::small_spec;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

bool same_bytes(const MatrixF& a, const MatrixF& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

ControlOptions small_control() {
  ControlOptions o;
  o.encode.n_components = 4;
  o.encode.threads = 2;
  o.roi = Roi::IFG;
  o.lag_layer_n_perm = 200;
  return o;
}

}  // namespace

TEST(Synth, DeterministicForSeed) {
  const auto a = synth_generate(small_spec(3));
  const auto b = synth_generate(small_spec(3));
  const auto c = synth_generate(small_spec(4));
  EXPECT_TRUE(same_bytes(a.bundle.signals.samples, b.bundle.signals.samples));
  EXPECT_FALSE(same_bytes(a.bundle.signals.samples, c.bundle.signals.samples));
  const auto& sa = a.bundle.set("contextual");
  const auto& sb = b.bundle.set("contextual");
  ASSERT_EQ(sa.layer_count(), 6);
  for (int l = 0; l < 6; ++l) EXPECT_TRUE(same_bytes(sa.layers[static_cast<std::size_t>(l)], sb.layers[static_cast<std::size_t>(l)]));
  EXPECT_EQ(truth_to_json(a.truth), truth_to_json(b.truth));
  EXPECT_EQ(a.bundle.set("glove").layer_count(), 1);
}

TEST(Synth, PlantedScheduleAndOverflow) {
  const auto s = synth_generate(small_spec(3));
  ASSERT_EQ(s.truth.planted_lags_ms.size(), 1u);
  for (int k = 1; k <= 6; ++k) EXPECT_DOUBLE_EQ(s.truth.planted_lags_ms[0][static_cast<std::size_t>(k - 1)], 20.0 * k + 100.0);
  auto bad = small_spec(3);
  bad.n_layers = 48;
  bad.rois[0].lag_slope_ms = 50.0;
  EXPECT_EQ(code_of([&] { synth_generate(bad); }), ErrorCode::GridOverflow);
}

TEST(Synth, NoiselessSignalIsWordLocked) {
  SynthSpec spec;
  spec.seed = 5;
  spec.rois[0].n_electrodes = 1;
  spec.white_sigma = 0.0;
  spec.pink_amplitude = 0.0;
  const auto s = synth_generate(spec);
  EncodeOptions o;
  const std::vector<std::size_t> elec{0};
  const auto enc = encode_condition(s.bundle, s.bundle.set("contextual"), WordCondition::All, elec, o);
  const auto peaks = peak_lags(enc.electrodes[0]);
  // One electrode mixes all 48 layer terms, so only ordering is asserted here.
  for (const auto& row : peaks.rows) EXPECT_GT(row.peak_r, 0.25) << "layer " << row.layer;
  EXPECT_GE(pearson(peaks.layer_indices(), peaks.lags()), 0.95);
}

TEST(InterpolationControl, SingleIterationPValue) {
  const auto s = synth_generate(small_spec(6));
  auto o = small_control();
  o.n_iter = 1;
  o.pool_size = 20;
  const auto r = run_interpolation_control(s.bundle, s.bundle.set("contextual"), o);
  EXPECT_EQ(r.n_iter, 1);
  ASSERT_EQ(r.null_r.size(), 1u);
  EXPECT_TRUE(r.p == 0.5 || r.p == 1.0) << r.p;
  EXPECT_EQ(r.observed_peak_lags.size(), 6u);
}

TEST(ProjectionControl, OrthogonalLayerLeavesOthersUnchanged) {
  const auto s = synth_generate(small_spec(7));
  const auto& base = s.bundle.set("contextual");
  EmbeddingSet set;
  set.name = "split";
  set.kind = EmbeddingKind::Contextual;
  const Eigen::Index d = base.dim();
  for (int l = 0; l < base.layer_count(); ++l) {
    MatrixF m = MatrixF::Zero(base.n_words(), d + 2);
    if (l == 2) {
      m.leftCols(2) = lagcoder::testing::gaussian_matrix(base.n_words(), 2, 8).cast<float>();
    } else {
      m.rightCols(d) = base.layers[static_cast<std::size_t>(l)];
    }
    set.layers.push_back(m);
  }
  const auto projected = project_out_layer(set, 3);
  EXPECT_TRUE(projected.zero_norm_words.empty());

  EncodeOptions o;
  o.n_components = 6;
  o.threads = 2;
  const std::vector<std::size_t> elec{0, 1};
  const auto before = encode_condition(s.bundle, set, WordCondition::All, elec, o);
  const auto after = encode_condition(s.bundle, projected.set, WordCondition::All, elec, o);
  for (std::size_t e = 0; e < elec.size(); ++e) {
    for (Eigen::Index l = 0; l < 6; ++l) {
      if (l == 2) continue;
      const auto diff = (before.electrodes[e].values.row(l) - after.electrodes[e].values.row(l)).cwiseAbs();
      EXPECT_LT(diff.maxCoeff(), 1e-6) << "layer " << l + 1;
    }
  }
}

TEST(ProjectionControl, RemovesMaxLayerAndKeepsOrder) {
  const auto s = synth_generate(small_spec(9));
  const auto r = run_projection_control(s.bundle, s.bundle.set("contextual"), small_control());
  EXPECT_GE(r.max_layer, 1);
  EXPECT_LE(r.max_layer, 6);
  EXPECT_EQ(r.roi_before.n_layers(), 6);
  EXPECT_TRUE(std::isnan(r.max_layer_peak_after) || r.max_layer_peak_after < r.null_ceiling + 0.05);
  EXPECT_GT(r.null_ceiling, 0.0);
}

TEST(Controls, QuantileAndEmptyRoi) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_NEAR(quantile({1, 2, 3, 4}, 0.95), 3.85, 1e-12);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.3), 7.0);
  const auto s = synth_generate(small_spec(3));
  EXPECT_EQ(control_electrodes(s.bundle, Roi::IFG, false).size(), 3u);
  EXPECT_EQ(code_of([&] { control_electrodes(s.bundle, Roi::TP, false); }), ErrorCode::EmptyRoi);
}

#include "lagcoder/error.hpp"
#include "lagcoder/pipeline.hpp"
#include "lagcoder/plot.hpp"
#include "lagcoder/synth.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

using namespace lagcoder;
using lagcoder::testing::TempDir;

namespace {

EncodingMatrix ramp_encoding(int n_layers, int n_lags) {
  EncodingMatrix m;
  m.values.resize(n_layers, n_lags);
  for (int l = 0; l < n_layers; ++l) {
    m.layers.push_back(l + 1);
    for (int j = 0; j < n_lags; ++j) m.values(l, j) = 0.5 * std::exp(-std::pow((j - l) / 6.0, 2)) * (1.0 + l / 100.0);
  }
  for (int j = 0; j < n_lags; ++j) m.lags_ms.push_back(-2000 + 25 * j);
  m.tag = "IFG";
  return m;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Plot, ScaledLinesPeakAtOne) {
  const auto scaled = scale_encodings(ramp_encoding(48, 161));
  PlotSpec spec;
  spec.kind = PlotKind::ScaledEncoding;
  PlotData data;
  data.encoding = scaled.matrix;
  const std::string svg = render(spec, data);
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_EQ(count(svg, "<polyline"), 48u);
  const std::regex max_attr("data-max=\"([^\"]+)\"");
  int seen = 0;
  for (std::sregex_iterator it(svg.begin(), svg.end(), max_attr), end; it != end; ++it, ++seen) {
    EXPECT_EQ((*it)[1].str(), "1.00");
  }
  EXPECT_EQ(seen, 48);
  EXPECT_EQ(svg, render(spec, data));
}

TEST(Plot, ScatterHasOnePointPerLayer) {
  PlotSpec spec;
  spec.kind = PlotKind::LagLayerScatter;
  PlotData data;
  PlotPanel panel;
  panel.label = "IFG";
  for (int k = 1; k <= 48; ++k) panel.peaks.rows.push_back({k, 100 + 6 * k, 0.3});
  panel.r = 1.0;
  data.panels.push_back(panel);
  EXPECT_EQ(count(render(spec, data), "<circle"), 48u);
}

TEST(Plot, DimensionMismatchAndColors) {
  PlotSpec spec;
  spec.kind = PlotKind::EncodingLines;
  auto bad = ramp_encoding(3, 5);
  bad.lags_ms.pop_back();
  PlotData data;
  data.encoding = bad;
  EXPECT_THROW(render(spec, data), Error);
  spec.kind = PlotKind::LayerBar;
  data.bars = {0.1, 0.2};
  data.marks = {true};
  try {
    render(spec, data);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_EQ(layer_color(1, 48), "#d73027");
  EXPECT_EQ(layer_color(48, 48), "#313695");
}

TEST(Plot, WritesFile) {
  TempDir dir;
  PlotSpec spec;
  spec.kind = PlotKind::EncodingLines;
  spec.title = "a < b & c";
  spec.output = dir / "lines.svg";
  PlotData data;
  data.encoding = ramp_encoding(4, 20);
  write_plot(spec, data);
  const auto text = slurp(spec.output);
  EXPECT_EQ(text, render(spec, data));
  EXPECT_NE(text.find("a &lt; b &amp; c"), std::string::npos);
}

namespace {

Config small_config() {
  Config cfg;
  cfg.rois = {Roi::IFG};
  cfg.conditions = {WordCondition::All};
  cfg.pca_components = 4;
  cfg.selection_enabled = false;
  cfg.lag_layer_n_perm = 200;
  cfg.bootstrap_n = 200;
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST(Pipeline, RerunIsByteIdentical) {
  const auto s = synth_generate(lagcoder::testing::small_spec(11));
  TempDir dir;
  const auto a = run_pipeline(small_config(), s.bundle, dir / "a");
  run_pipeline(small_config(), s.bundle, dir / "b");
  const auto ra = slurp(dir / "a" / "report.json");
  EXPECT_FALSE(ra.empty());
  EXPECT_EQ(ra, slurp(dir / "b" / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "run_manifest.json"));
  ASSERT_EQ(a.rois.size(), 1u);
  EXPECT_EQ(a.rois[0].roi, Roi::IFG);
  EXPECT_EQ(a.rois[0].peaks.rows.size(), 6u);
  // Six strongly coupled layers blur toward the middle lags; ordering survives.
  EXPECT_GT(a.rois[0].lag_layer.pearson_r, 0.5);
}

TEST(Pipeline, MissingStaticSetNamesStageAndSet) {
  const auto s = synth_generate(lagcoder::testing::small_spec(12));
  TempDir dir;
  auto cfg = small_config();
  cfg.selection_enabled = true;
  cfg.static_set = "word2vec";
  try {
    run_pipeline(cfg, s.bundle, dir / "out");
    ADD_FAILURE() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSet);
    EXPECT_EQ(e.stage(), "select");
    EXPECT_NE(std::string(e.what()).find("word2vec"), std::string::npos);
  }
}

#pragma once

#include "lagcoder/encoding.hpp"
#include "lagcoder/types.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lagcoder {

enum class PlotKind { EncodingLines, ScaledEncoding, LagLayerScatter, LayerBar, RoiPanel };

std::string_view to_string(PlotKind kind) noexcept;
PlotKind parse_plot_kind(std::string_view text);

struct PlotSpec {
  PlotKind kind = PlotKind::EncodingLines;
  std::string title;
  std::optional<std::array<double, 2>> x_range;
  std::optional<std::array<double, 2>> y_range;
  int width = 720;
  int height = 480;
  std::filesystem::path output;  // used by write_plot
};

struct PlotPanel {
  std::string label;
  PeakLagTable peaks;
  std::optional<double> r;
};

/// Inputs by kind: lines and scaled use `encoding`; scatter uses the first
/// panel; bar uses `bars` (one per layer, optional `marks`); roi_panel uses
/// every panel.
struct PlotData {
  std::optional<EncodingMatrix> encoding;
  std::vector<PlotPanel> panels;
  std::vector<double> bars;
  std::vector<bool> marks;  // significance stars over bars
};

/// Layer colour on the red (first) to blue (last) ramp, as "#rrggbb".
std::string layer_color(int layer, int n_layers);

/// Standalone SVG; byte-identical for identical input. Throws DimensionMismatch.
std::string render(const PlotSpec& spec, const PlotData& data);

void write_plot(const PlotSpec& spec, const PlotData& data);

}  // namespace lagcoder

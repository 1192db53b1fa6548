#include "lagcoder/plot.hpp"

#include "lagcoder/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace lagcoder {

namespace {

constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, y0, w, h;  // pixel box
  double xmin, xmax, ymin, ymax;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

std::array<double, 2> padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  o << "<rect x=\"" << fmt(f.x0) << "\" y=\"" << fmt(f.y0) << "\" width=\"" << fmt(f.w) << "\" height=\""
    << fmt(f.h) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.xmin + (f.xmax - f.xmin) * i / 4.0;
    const double yv = f.ymin + (f.ymax - f.ymin) * i / 4.0;
    o << "<text x=\"" << fmt(f.px(xv)) << "\" y=\"" << fmt(f.y0 + f.h + 16)
      << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
    o << "<text x=\"" << fmt(f.x0 - 6) << "\" y=\"" << fmt(f.py(yv) + 4)
      << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
  }
  o << "<text x=\"" << fmt(f.x0 + f.w / 2) << "\" y=\"" << fmt(f.y0 + f.h + 36)
    << "\" font-size=\"12\" text-anchor=\"middle\">" << escape_xml(xlabel) << "</text>\n";
  o << "<text x=\"" << fmt(f.x0 - 50) << "\" y=\"" << fmt(f.y0 + f.h / 2) << "\" font-size=\"12\" transform=\"rotate(-90 "
    << fmt(f.x0 - 50) << ' ' << fmt(f.y0 + f.h / 2) << ")\" text-anchor=\"middle\">" << escape_xml(ylabel)
    << "</text>\n";
}

void encoding_lines(std::ostringstream& o, const PlotSpec& spec, const EncodingMatrix& m, const Frame& base) {
  require(m.n_layers() > 0 && m.n_lags() > 0, ErrorCode::DimensionMismatch, "encoding plot needs layers and lags");
  require(static_cast<Eigen::Index>(m.lags_ms.size()) == m.n_lags() &&
              static_cast<Eigen::Index>(m.layers.size()) == m.n_layers(),
          ErrorCode::DimensionMismatch, "encoding axes do not match its values");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < m.values.size(); ++i) {
    const double v = m.values.data()[i];
    if (std::isnan(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Frame f = base;
  const auto xr = spec.x_range.value_or(std::array<double, 2>{double(m.lags_ms.front()), double(m.lags_ms.back())});
  const auto yr = spec.y_range.value_or(padded(lo, hi));
  f.xmin = xr[0];
  f.xmax = xr[1];
  f.ymin = yr[0];
  f.ymax = yr[1];
  axes(o, f, "lag (ms)", spec.kind == PlotKind::ScaledEncoding ? "scaled r" : "r");
  const int n = static_cast<int>(m.n_layers());
  for (Eigen::Index i = 0; i < m.n_layers(); ++i) {
    const int layer = m.layers[static_cast<std::size_t>(i)];
    double row_max = -std::numeric_limits<double>::infinity();
    std::string pts;
    for (Eigen::Index j = 0; j < m.n_lags(); ++j) {
      const double v = m.values(i, j);
      if (std::isnan(v)) continue;
      row_max = std::max(row_max, v);
      if (!pts.empty()) pts += ' ';
      pts += fmt(f.px(m.lags_ms[static_cast<std::size_t>(j)])) + ',' + fmt(f.py(v));
    }
    o << "<polyline data-layer=\"" << layer << "\" data-max=\"" << (std::isfinite(row_max) ? fmt(row_max) : "nan")
      << "\" fill=\"none\" stroke=\"" << layer_color(static_cast<int>(i) + 1, n)
      << "\" stroke-width=\"1.2\" points=\"" << pts << "\"/>\n";
  }
}

void scatter(std::ostringstream& o, const PlotSpec& spec, const PlotPanel& panel, const Frame& base) {
  require(!panel.peaks.rows.empty(), ErrorCode::DimensionMismatch, "scatter plot needs at least one layer");
  const auto xs = panel.peaks.layer_indices();
  const auto ys = panel.peaks.lags();
  Frame f = base;
  const auto xr = spec.x_range.value_or(padded(*std::min_element(xs.begin(), xs.end()),
                                               *std::max_element(xs.begin(), xs.end())));
  const auto yr = spec.y_range.value_or(padded(*std::min_element(ys.begin(), ys.end()),
                                               *std::max_element(ys.begin(), ys.end())));
  f.xmin = xr[0];
  f.xmax = xr[1];
  f.ymin = yr[0];
  f.ymax = yr[1];
  axes(o, f, "layer", "peak lag (ms)");
  const int n = static_cast<int>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    o << "<circle data-layer=\"" << panel.peaks.rows[i].layer << "\" cx=\"" << fmt(f.px(xs[i])) << "\" cy=\""
      << fmt(f.py(ys[i])) << "\" r=\"4\" fill=\"" << layer_color(static_cast<int>(i) + 1, n) << "\"/>\n";
  }
  std::string label = panel.label;
  if (panel.r) label += (label.empty() ? "" : "  ") + std::string("r = ") + fmt(*panel.r);
  if (!label.empty()) {
    o << "<text x=\"" << fmt(f.x0 + 8) << "\" y=\"" << fmt(f.y0 + 16) << "\" font-size=\"12\">" << escape_xml(label)
      << "</text>\n";
  }
}

void bars(std::ostringstream& o, const PlotSpec& spec, const PlotData& data, const Frame& base) {
  require(!data.bars.empty(), ErrorCode::DimensionMismatch, "bar plot needs at least one layer");
  require(data.marks.empty() || data.marks.size() == data.bars.size(), ErrorCode::DimensionMismatch,
          "bar marks must match the bars");
  double lo = 0, hi = 0;
  for (const double v : data.bars) {
    if (std::isnan(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Frame f = base;
  const auto n = static_cast<double>(data.bars.size());
  const auto yr = spec.y_range.value_or(padded(lo, hi));
  f.xmin = 0.5;
  f.xmax = n + 0.5;
  f.ymin = yr[0];
  f.ymax = yr[1];
  axes(o, f, "layer", "max r");
  const double bw = f.w / n * 0.8;
  for (std::size_t i = 0; i < data.bars.size(); ++i) {
    const double v = std::isnan(data.bars[i]) ? 0.0 : data.bars[i];
    const double x = f.px(static_cast<double>(i + 1)) - bw / 2;
    const double y = f.py(std::max(v, 0.0));
    const double h = std::abs(f.py(v) - f.py(0.0));
    o << "<rect data-layer=\"" << i + 1 << "\" x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(bw)
      << "\" height=\"" << fmt(h) << "\" fill=\"" << layer_color(static_cast<int>(i) + 1, static_cast<int>(n))
      << "\"/>\n";
    if (!data.marks.empty() && data.marks[i]) {
      o << "<text x=\"" << fmt(x + bw / 2) << "\" y=\"" << fmt(y - 3)
        << "\" font-size=\"12\" text-anchor=\"middle\">*</text>\n";
    }
  }
}

}  // namespace

std::string_view to_string(PlotKind kind) noexcept {
  switch (kind) {
    case PlotKind::EncodingLines: return "encoding_lines";
    case PlotKind::ScaledEncoding: return "scaled_encoding";
    case PlotKind::LagLayerScatter: return "lag_layer_scatter";
    case PlotKind::LayerBar: return "layer_bar";
    case PlotKind::RoiPanel: return "roi_panel";
  }
  return "encoding_lines";
}

PlotKind parse_plot_kind(std::string_view text) {
  for (auto k : {PlotKind::EncodingLines, PlotKind::ScaledEncoding, PlotKind::LagLayerScatter, PlotKind::LayerBar,
                 PlotKind::RoiPanel}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown plot kind '" + std::string(text) + "'");
}

std::string layer_color(int layer, int n_layers) {
  const double t = n_layers <= 1 ? 0.0 : static_cast<double>(layer - 1) / (n_layers - 1);
  const auto mix = [t](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(215, 49), mix(48, 54), mix(39, 149));
  return buf;
}

std::string render(const PlotSpec& spec, const PlotData& data) {
  require(spec.width > 2 * (kLeft + kRight) && spec.height > 2 * (kTop + kBottom), ErrorCode::InvalidArgument,
          "plot is too small");
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
    << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\" data-kind=\"" << to_string(spec.kind)
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!spec.title.empty()) {
    o << "<text x=\"" << spec.width / 2 << "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">"
      << escape_xml(spec.title) << "</text>\n";
  }
  const Frame full{kLeft, kTop, spec.width - kLeft - kRight, spec.height - kTop - kBottom, 0, 1, 0, 1};

  switch (spec.kind) {
    case PlotKind::EncodingLines:
    case PlotKind::ScaledEncoding:
      require(data.encoding.has_value(), ErrorCode::DimensionMismatch, "encoding plot needs an encoding matrix");
      encoding_lines(o, spec, *data.encoding, full);
      break;
    case PlotKind::LagLayerScatter:
      require(!data.panels.empty(), ErrorCode::DimensionMismatch, "scatter plot needs a peak-lag table");
      scatter(o, spec, data.panels.front(), full);
      break;
    case PlotKind::LayerBar:
      bars(o, spec, data, full);
      break;
    case PlotKind::RoiPanel: {
      require(!data.panels.empty(), ErrorCode::DimensionMismatch, "ROI panel needs at least one ROI");
      const auto n = static_cast<double>(data.panels.size());
      const double w = (spec.width - kLeft * n - kRight) / n;
      for (std::size_t i = 0; i < data.panels.size(); ++i) {
        const Frame f{kLeft + static_cast<double>(i) * (w + kLeft), kTop, w, full.h, 0, 1, 0, 1};
        o << "<g data-panel=\"" << escape_xml(data.panels[i].label) << "\">\n";
        scatter(o, spec, data.panels[i], f);
        o << "</g>\n";
      }
      break;
    }
  }
  o << "</svg>\n";
  return o.str();
}

void write_plot(const PlotSpec& spec, const PlotData& data) {
  const std::string svg = render(spec, data);
  require(!spec.output.empty(), ErrorCode::InvalidArgument, "plot output path is empty");
  if (spec.output.has_parent_path()) std::filesystem::create_directories(spec.output.parent_path());
  std::ofstream out(spec.output, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + spec.output.string());
  out << svg;
}

}  // namespace lagcoder

#include "lagcoder/controls.hpp"

#include "lagcoder/embedding_prep.hpp"
#include "lagcoder/error.hpp"
#include "lagcoder/parallel.hpp"
#include "lagcoder/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace lagcoder {

namespace {

EncodingMatrix roi_average_of(const ConditionEncoding& enc, Roi roi) {
  return average_roi(enc.electrodes, std::string(to_string(roi)));
}

EncodingMatrix drop_layer(const EncodingMatrix& m, int layer) {
  EncodingMatrix out = m;
  out.layers.clear();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < m.n_layers(); ++i) {
    if (m.layers[static_cast<std::size_t>(i)] != layer) keep.push_back(i);
  }
  out.values.resize(static_cast<Eigen::Index>(keep.size()), m.n_lags());
  if (m.contributors.size() > 0) out.contributors.resize(static_cast<Eigen::Index>(keep.size()), m.n_lags());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) = m.values.row(keep[r]);
    if (m.contributors.size() > 0) out.contributors.row(static_cast<Eigen::Index>(r)) = m.contributors.row(keep[r]);
    out.layers.push_back(m.layers[static_cast<std::size_t>(keep[r])]);
  }
  return out;
}

}  // namespace

ControlOptions control_options(const Config& cfg) {
  ControlOptions o;
  o.encode = encode_options(cfg);
  o.lag_layer_n_perm = cfg.lag_layer_n_perm;
  o.sided = cfg.lag_layer_sided;
  return o;
}

std::vector<std::size_t> control_electrodes(const DatasetBundle& bundle, Roi roi, bool selected_only) {
  auto e = bundle.electrodes_in(roi, selected_only);
  require(!e.empty(), ErrorCode::EmptyRoi,
          std::string("no ") + (selected_only ? "selected " : "") + "electrodes in ROI " +
              std::string(to_string(roi)));
  return e;
}

double quantile(std::vector<double> values, double q) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }), values.end());
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ControlReport run_interpolation_control(const DatasetBundle& bundle, const EmbeddingSet& set,
                                        const ControlOptions& opts) {
  require(opts.n_iter >= 1, ErrorCode::InvalidArgument, "n_iter must be >= 1");
  require(set.layer_count() >= 3, ErrorCode::InvalidArgument, "interpolation control needs at least 3 layers");
  const auto electrodes = control_electrodes(bundle, opts.roi, opts.selected_only);
  const std::string tag(to_string(opts.roi));

  // Observed lag-layer r of the real layers.
  const ConditionEncoding observed = encode_condition(bundle, set, opts.condition, electrodes, opts.encode);
  const PeakLagTable observed_peaks = peak_lags(roi_average_of(observed, opts.roi));
  ControlReport report;
  report.observed_peak_lags = observed_peaks.lags();
  report.observed_r = pearson(observed_peaks.layer_indices(), report.observed_peak_lags);
  report.n_iter = opts.n_iter;
  report.pool_size = opts.pool_size;

  const auto& rows = observed.word_rows;
  std::vector<double> onsets;
  for (const std::size_t w : rows) onsets.push_back(bundle.words[w].onset);
  const ResponseTensor y =
      build_responses(bundle.signals, onsets, electrodes, opts.encode.lags, opts.encode.window_ms);
  const FoldAssignment folds = make_folds(rows.size(), opts.encode.n_folds, opts.encode.fold_scheme, opts.encode.seed);
  const CvPlan plan(folds, y.valid);
  const int n_comp = static_cast<int>(std::min<Eigen::Index>(opts.encode.n_components, set.dim()));

  const PseudoLayerPool pool(set.layers.front(), set.layers.back(), opts.pool_size);
  const auto k = static_cast<std::size_t>(set.layer_count() - 2);

  std::vector<std::vector<std::size_t>> draws(static_cast<std::size_t>(opts.n_iter));
  std::vector<std::uint8_t> needed(pool.size(), 0);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    Rng rng = make_rng(opts.encode.seed, Stream::Interpolation, i);
    draws[i] = sample_pool_indices(pool.size(), k, rng);
    for (const std::size_t j : draws[i]) needed[j] = 1;
  }
  std::vector<std::size_t> todo;
  for (std::size_t j = 0; j < needed.size(); ++j) {
    if (needed[j]) todo.push_back(j);
  }

  auto peak_of = [&](const MatrixF& layer) {
    const ReducedLayer reduced = reduce_layer(gather_rows(layer, rows), folds, opts.encode.pca_mode, n_comp);
    const MatrixD r = CvDesign(plan, reduced).correlate(y);
    std::vector<EncodingMatrix> per_electrode(static_cast<std::size_t>(r.rows()));
    for (Eigen::Index e = 0; e < r.rows(); ++e) {
      auto& m = per_electrode[static_cast<std::size_t>(e)];
      m.values = r.row(e);
      m.lags_ms = y.lags_ms;
      m.layers = {1};
      m.tag = tag;
    }
    return static_cast<double>(peak_lags(average_roi(per_electrode, tag)).rows.front().peak_lag_ms);
  };

  std::vector<double> pool_peak(pool.size(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(todo.size(), opts.encode.threads, [&](std::size_t t) {
    pool_peak[todo[t]] = peak_of(pool.layer(todo[t]));
  });
  const double first_peak = report.observed_peak_lags.front();
  const double last_peak = report.observed_peak_lags.back();

  std::vector<double> layer_index(static_cast<std::size_t>(set.layer_count()));
  for (std::size_t i = 0; i < layer_index.size(); ++i) layer_index[i] = static_cast<double>(i + 1);
  report.null_r.resize(draws.size());
  std::size_t exceed = 0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    std::vector<double> lags{first_peak};
    for (const std::size_t j : draws[i]) lags.push_back(pool_peak[j]);
    lags.push_back(last_peak);
    report.null_r[i] = pearson(layer_index, lags);
    if (!std::isnan(report.null_r[i]) && report.null_r[i] >= report.observed_r) ++exceed;
  }
  report.p = std::isnan(report.observed_r)
                 ? std::numeric_limits<double>::quiet_NaN()
                 : (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(opts.n_iter));
  return report;
}

double null_ceiling(const DatasetBundle& bundle, const EmbeddingSet& set, const std::vector<std::size_t>& electrodes,
                    WordCondition condition, const EncodeOptions& opts) {
  DatasetBundle surrogate = bundle;
  const auto n = static_cast<std::size_t>(bundle.signals.n_samples());
  parallel_for(electrodes.size(), opts.threads, [&](std::size_t i) {
    const auto e = static_cast<Eigen::Index>(electrodes[i]);
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = bundle.signals.samples(e, static_cast<Eigen::Index>(t));
    Rng rng = make_rng(opts.seed, Stream::NullCeiling, electrodes[i]);
    const auto s = phase_randomize(x, rng);
    for (std::size_t t = 0; t < n; ++t) surrogate.signals.samples(e, static_cast<Eigen::Index>(t)) = static_cast<float>(s[t]);
  });
  const ConditionEncoding enc = encode_condition(surrogate, set, condition, electrodes, opts);
  const EncodingMatrix roi = average_roi(enc.electrodes, "null");
  std::vector<double> cells(roi.values.data(), roi.values.data() + roi.values.size());
  return quantile(std::move(cells), 0.95);
}

ProjectionReport run_projection_control(const DatasetBundle& bundle, const EmbeddingSet& set,
                                        const ControlOptions& opts) {
  const auto electrodes = control_electrodes(bundle, opts.roi, opts.selected_only);
  ProjectionReport report;
  report.roi_before = roi_average_of(encode_condition(bundle, set, opts.condition, electrodes, opts.encode), opts.roi);
  report.max_layer = max_layer(report.roi_before);

  const ProjectionResult projected = project_out_layer(set, report.max_layer);
  report.zero_norm_words = projected.zero_norm_words;
  report.roi_after =
      roi_average_of(encode_condition(bundle, projected.set, opts.condition, electrodes, opts.encode), opts.roi);

  const auto row = report.roi_after.values.row(report.max_layer - 1);
  double peak = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (!std::isnan(row(j)) && (std::isnan(peak) || row(j) > peak)) peak = row(j);
  }
  report.max_layer_peak_after = peak;
  report.null_ceiling = null_ceiling(bundle, projected.set, electrodes, opts.condition, opts.encode);

  const PeakLagTable peaks = peak_lags(drop_layer(report.roi_after, report.max_layer));
  report.lag_layer_after =
      lag_layer_correlation(peaks, opts.lag_layer_n_perm, opts.encode.seed, opts.sided, opts.encode.threads);
  return report;
}

}  // namespace lagcoder

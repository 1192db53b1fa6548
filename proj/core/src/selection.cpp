#include "lagcoder/selection.hpp"

#include "fft.hpp"
#include "lagcoder/cv_engine.hpp"
#include "lagcoder/embedding_prep.hpp"
#include "lagcoder/encoding.hpp"
#include "lagcoder/error.hpp"
#include "lagcoder/parallel.hpp"
#include "lagcoder/rng.hpp"
#include "lagcoder/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lagcoder {

namespace {

double max_finite(const auto& row) {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (!std::isnan(row(j))) best = std::max(best, row(j));
  }
  return best;
}

}  // namespace

SelectionOptions selection_options(const Config& cfg) {
  SelectionOptions o;
  o.n_perm = cfg.selection_n_perm;
  o.q_threshold = cfg.selection_q;
  o.lags = cfg.lags;
  o.window_ms = cfg.window_ms;
  o.n_folds = cfg.folds;
  o.fold_scheme = cfg.fold_scheme;
  o.n_components = cfg.pca_components;
  o.seed = cfg.master_seed;
  o.threads = cfg.threads;
  return o;
}

std::vector<std::size_t> SelectionReport::selected_indices() const {
  std::vector<std::size_t> out;
  for (const auto& e : electrodes) {
    if (e.selected) out.push_back(e.index);
  }
  return out;
}

SelectionReport select_electrodes(const DatasetBundle& bundle, const EmbeddingSet& static_set,
                                  const SelectionOptions& opts) {
  require(opts.n_perm >= 1, ErrorCode::InvalidArgument, "selection needs at least one permutation");
  require(static_set.layer_count() == 1, ErrorCode::InvalidArgument,
          "selection expects a single-layer static set, got " + std::to_string(static_set.layer_count()) +
              " layers in '" + static_set.name + "'");
  static_set.validate(static_cast<Eigen::Index>(bundle.words.size()));
  require(!bundle.electrodes.empty(), ErrorCode::InvalidArgument, "bundle has no electrodes");

  SelectionReport report;
  report.n_perm = opts.n_perm;
  report.q_threshold = opts.q_threshold;

  const auto onsets = bundle.onsets();
  const auto n_elec = static_cast<std::size_t>(bundle.signals.n_electrodes());
  const int n_comp = static_cast<int>(std::min<Eigen::Index>(opts.n_components, static_set.dim()));
  if (onsets.size() < static_cast<std::size_t>(10 * (n_comp + 2))) {
    report.warnings.push_back("only " + std::to_string(onsets.size()) + " words for a " + std::to_string(n_comp) +
                              "-dimensional static design; encoding may be unstable");
  }

  const ResponseTensor y = build_responses(bundle.signals, onsets, {}, opts.lags, opts.window_ms);
  const FoldAssignment folds = make_folds(onsets.size(), opts.n_folds, opts.fold_scheme, opts.seed);
  const CvPlan plan(folds, y.valid);
  std::vector<std::size_t> all_rows(onsets.size());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  const ReducedLayer layer =
      reduce_layer(gather_rows(static_set.layers.front(), all_rows), folds, PcaMode::Full, n_comp);
  const CvDesign design(plan, layer);

  const MatrixD observed = design.correlate(y);
  std::vector<double> obs_max(n_elec);
  for (std::size_t e = 0; e < n_elec; ++e) obs_max[e] = max_finite(observed.row(static_cast<Eigen::Index>(e)));

  // Spectra are computed once; each permutation only redraws phases.
  const auto n_samples = static_cast<std::size_t>(bundle.signals.n_samples());
  const detail::RealFft fft(n_samples);
  std::vector<std::vector<detail::Complex>> spectra(n_elec);
  parallel_for(n_elec, opts.threads, [&](std::size_t e) {
    std::vector<double> x(n_samples);
    const auto row = bundle.signals.samples.row(static_cast<Eigen::Index>(e));
    for (std::size_t i = 0; i < n_samples; ++i) x[i] = row(static_cast<Eigen::Index>(i));
    spectra[e] = fft.forward(x);
  });

  report.null_max.assign(static_cast<std::size_t>(opts.n_perm), 0.0);
  parallel_for(static_cast<std::size_t>(opts.n_perm), opts.threads, [&](std::size_t p) {
    SignalRecording surrogate;
    surrogate.sample_rate = bundle.signals.sample_rate;
    surrogate.t0 = bundle.signals.t0;
    surrogate.samples.resize(static_cast<Eigen::Index>(n_elec), static_cast<Eigen::Index>(n_samples));
    for (std::size_t e = 0; e < n_elec; ++e) {
      Rng rng = make_rng(opts.seed, Stream::PhaseRandomization, p, e);
      auto spectrum = spectra[e];
      detail::randomize_phases(spectrum, n_samples, rng);
      const auto x = fft.inverse(spectrum);
      for (std::size_t i = 0; i < n_samples; ++i) {
        surrogate.samples(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(i)) = static_cast<float>(x[i]);
      }
    }
    const ResponseTensor ys = build_responses(surrogate, onsets, {}, opts.lags, opts.window_ms);
    const MatrixD r = design.correlate(ys);
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < n_elec; ++e) m = std::max(m, max_finite(r.row(static_cast<Eigen::Index>(e))));
    report.null_max[p] = m;
  });

  std::vector<double> sorted = report.null_max;
  std::sort(sorted.begin(), sorted.end());
  report.null_mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  const double pos = 0.95 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  report.null_p95 = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);

  std::vector<double> pvals(n_elec);
  for (std::size_t e = 0; e < n_elec; ++e) {
    const auto exceed = static_cast<double>(
        sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), obs_max[e]));
    pvals[e] = std::isfinite(obs_max[e]) ? (1.0 + exceed) / (1.0 + static_cast<double>(opts.n_perm)) : 1.0;
  }
  const auto q = fdr_bh(pvals);
  for (std::size_t e = 0; e < n_elec; ++e) {
    ElectrodeSelection s;
    s.index = e;
    s.id = bundle.electrodes[e].id;
    s.observed_max_r = obs_max[e];
    s.p = pvals[e];
    s.q = q[e];
    s.selected = q[e] < opts.q_threshold;
    report.electrodes.push_back(s);
  }
  return report;
}

DatasetBundle apply_selection(const DatasetBundle& bundle, const SelectionReport& report) {
  DatasetBundle out = bundle;
  for (auto& e : out.electrodes) e.selected = false;
  for (const auto& s : report.electrodes) {
    require(s.index < out.electrodes.size(), ErrorCode::OutOfRange, "selection report does not match the bundle");
    out.electrodes[s.index].selected = s.selected;
  }
  return out;
}

}  // namespace lagcoder

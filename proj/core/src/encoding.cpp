#include "lagcoder/encoding.hpp"

#include "lagcoder/error.hpp"
#include "lagcoder/parallel.hpp"
#include "lagcoder/rng.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace lagcoder {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Prefix sums of one electrode, length n_samples + 1.
std::vector<double> prefix_sums(const float* row, Eigen::Index n) {
  std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) c[static_cast<std::size_t>(i) + 1] = c[static_cast<std::size_t>(i)] + row[i];
  return c;
}

struct WindowSpan {
  Eigen::Index lo = 0, hi = 0;  // inclusive
  bool valid = false;
};

WindowSpan window_at(double onset, int lag_ms, Eigen::Index half, double fs, Eigen::Index n_samples) {
  const double centre = std::llround((onset + lag_ms / 1000.0) * fs);
  WindowSpan w;
  if (!std::isfinite(centre)) return w;
  const auto c = static_cast<Eigen::Index>(centre);
  w.lo = c - half;
  w.hi = c + half;
  w.valid = w.lo >= 0 && w.hi < n_samples;
  return w;
}

double pearson_from_sums(double n, double sp, double spp, double sy, double syy, double spy, double raw_yy) {
  const double vy = syy - sy * sy / n;
  const double vp = spp - sp * sp / n;
  if (!(vy > 1e-24 * raw_yy) || !(vy > 0) || !(vp > 1e-24 * spp) || !(vp > 0)) return kNaN;
  return std::clamp((spy - sp * sy / n) / std::sqrt(vy * vp), -1.0, 1.0);
}

std::vector<int> one_based(int n) {
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i + 1;
  return out;
}

}  // namespace

Eigen::Index window_half_samples(double window_ms, double sample_rate) {
  require(window_ms > 0 && sample_rate > 0, ErrorCode::InvalidArgument, "window and sample rate must be positive");
  return static_cast<Eigen::Index>(std::llround(window_ms / 1000.0 * sample_rate / 2.0));
}

WindowedSignal window_signal(const SignalRecording& rec, std::span<const double> onsets, int lag_ms,
                             double window_ms, std::span<const std::size_t> electrodes) {
  std::vector<std::size_t> all;
  if (electrodes.empty()) {
    all.resize(static_cast<std::size_t>(rec.n_electrodes()));
    for (std::size_t e = 0; e < all.size(); ++e) all[e] = e;
    electrodes = all;
  }
  const Eigen::Index half = window_half_samples(window_ms, rec.sample_rate);
  const double count = static_cast<double>(2 * half + 1);
  WindowedSignal out;
  out.values = MatrixD::Constant(static_cast<Eigen::Index>(electrodes.size()),
                                 static_cast<Eigen::Index>(onsets.size()), kNaN);
  out.valid.assign(onsets.size(), 0);
  std::vector<WindowSpan> spans(onsets.size());
  for (std::size_t w = 0; w < onsets.size(); ++w) {
    spans[w] = window_at(onsets[w], lag_ms, half, rec.sample_rate, rec.n_samples());
    out.valid[w] = spans[w].valid ? 1 : 0;
  }
  for (std::size_t i = 0; i < electrodes.size(); ++i) {
    require(electrodes[i] < static_cast<std::size_t>(rec.n_electrodes()), ErrorCode::OutOfRange,
            "electrode index out of range");
    const auto c = prefix_sums(rec.samples.row(static_cast<Eigen::Index>(electrodes[i])).data(), rec.n_samples());
    for (std::size_t w = 0; w < onsets.size(); ++w) {
      if (!spans[w].valid) continue;
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(w)) =
          (c[static_cast<std::size_t>(spans[w].hi) + 1] - c[static_cast<std::size_t>(spans[w].lo)]) / count;
    }
  }
  return out;
}

ResponseTensor build_responses(const SignalRecording& rec, std::span<const double> onsets,
                               std::span<const std::size_t> electrodes, const LagGrid& lags, double window_ms) {
  lags.validate();
  std::vector<std::size_t> all;
  if (electrodes.empty()) {
    all.resize(static_cast<std::size_t>(rec.n_electrodes()));
    for (std::size_t e = 0; e < all.size(); ++e) all[e] = e;
    electrodes = all;
  }
  const Eigen::Index half = window_half_samples(window_ms, rec.sample_rate);
  const double count = static_cast<double>(2 * half + 1);
  const auto n_words = static_cast<Eigen::Index>(onsets.size());
  const auto n_lags = static_cast<Eigen::Index>(lags.size());

  ResponseTensor y;
  y.lags_ms = lags.lags();
  y.valid.resize(n_words, n_lags);
  std::vector<WindowSpan> spans(static_cast<std::size_t>(n_words * n_lags));
  for (Eigen::Index l = 0; l < n_lags; ++l) {
    for (Eigen::Index w = 0; w < n_words; ++w) {
      const auto s = window_at(onsets[static_cast<std::size_t>(w)], lags.lag(static_cast<std::size_t>(l)), half,
                               rec.sample_rate, rec.n_samples());
      spans[static_cast<std::size_t>(l * n_words + w)] = s;
      y.valid(w, l) = s.valid ? 1 : 0;
    }
  }
  y.values.resize(electrodes.size());
  for (std::size_t i = 0; i < electrodes.size(); ++i) {
    require(electrodes[i] < static_cast<std::size_t>(rec.n_electrodes()), ErrorCode::OutOfRange,
            "electrode index out of range");
    const auto c = prefix_sums(rec.samples.row(static_cast<Eigen::Index>(electrodes[i])).data(), rec.n_samples());
    MatrixD& v = y.values[i];
    v = MatrixD::Constant(n_words, n_lags, kNaN);
    for (Eigen::Index l = 0; l < n_lags; ++l) {
      for (Eigen::Index w = 0; w < n_words; ++w) {
        const auto& s = spans[static_cast<std::size_t>(l * n_words + w)];
        if (s.valid) v(w, l) = (c[static_cast<std::size_t>(s.hi) + 1] - c[static_cast<std::size_t>(s.lo)]) / count;
      }
    }
  }
  return y;
}

ResponseTensor build_responses(const MatrixD& signals, double sample_rate, std::span<const double> onsets,
                               const LagGrid& lags, double window_ms) {
  SignalRecording rec;
  rec.samples = signals.cast<float>();
  rec.sample_rate = sample_rate;
  return build_responses(rec, onsets, {}, lags, window_ms);
}

// ---------------------------------------------------------------- OLS

VectorD OlsFit::predict(const MatrixD& x) const {
  require(x.cols() == weights.size(), ErrorCode::ShapeMismatch, "design width does not match the fit");
  return (x * weights).array() + intercept;
}

OlsFit ols_fit(const MatrixD& x, const VectorD& y) {
  require(x.rows() == y.size(), ErrorCode::ShapeMismatch, "design and response lengths differ");
  require(x.rows() > x.cols() + 1, ErrorCode::InvalidArgument,
          "OLS needs more rows (" + std::to_string(x.rows()) + ") than parameters (" +
              std::to_string(x.cols() + 1) + ")");
  require(x.allFinite() && y.allFinite(), ErrorCode::NonFiniteValue, "non-finite value in OLS input");
  OlsFit fit;
  if (x.size() == 0 || (x.array() == 0.0).all()) {
    fit.weights = VectorD::Zero(x.cols());
    fit.intercept = y.mean();
    fit.degenerate = true;
    return fit;
  }
  MatrixD a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  Eigen::CompleteOrthogonalDecomposition<MatrixD> cod(a);
  const VectorD beta = cod.solve(y);
  fit.intercept = beta(0);
  fit.weights = beta.tail(x.cols());
  return fit;
}

double cv_encode(const ReducedLayer& x, const VectorD& y, const FoldAssignment& folds) {
  folds.validate();
  require(static_cast<Eigen::Index>(folds.n_words()) == y.size(), ErrorCode::ShapeMismatch,
          "folds do not cover the responses");
  double sp = 0, spp = 0, sy = 0, syy = 0, spy = 0, n = 0;
  for (int f = 0; f < folds.n_folds; ++f) {
    const MatrixD& xf = x.for_fold(f);
    require(xf.rows() == y.size(), ErrorCode::ShapeMismatch, "design rows do not match the responses");
    const auto test = folds.members(f);
    const auto train = folds.complement(f);
    if (test.empty()) continue;
    MatrixD x_train(static_cast<Eigen::Index>(train.size()), xf.cols());
    VectorD y_train(static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
      x_train.row(static_cast<Eigen::Index>(i)) = xf.row(static_cast<Eigen::Index>(train[i]));
      y_train(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(train[i]));
    }
    const OlsFit fit = ols_fit(x_train, y_train);
    for (const std::size_t w : test) {
      const double p = xf.row(static_cast<Eigen::Index>(w)).dot(fit.weights) + fit.intercept;
      const double yv = y(static_cast<Eigen::Index>(w));
      sp += p;
      spp += p * p;
      sy += yv;
      syy += yv * yv;
      spy += p * yv;
      n += 1;
    }
  }
  if (n < 3) return kNaN;
  // Shift y by its mean first so the variance test is not swamped by an offset.
  const double my = sy / n;
  const double syy_c = syy - 2 * my * sy + n * my * my;
  const double spy_c = spy - my * sp;
  return pearson_from_sums(n, sp, spp, 0.0, syy_c, spy_c, syy);
}

double cv_encode(const MatrixD& x, const VectorD& y, const FoldAssignment& folds) {
  ReducedLayer layer;
  layer.per_fold.push_back(x);
  return cv_encode(layer, y, folds);
}

// ---------------------------------------------------------------- grid

EncodeOptions encode_options(const Config& cfg) {
  EncodeOptions o;
  o.lags = cfg.lags;
  o.window_ms = cfg.window_ms;
  o.n_folds = cfg.folds;
  o.fold_scheme = cfg.fold_scheme;
  o.seed = cfg.master_seed;
  o.pca_mode = cfg.pca_mode;
  o.n_components = cfg.pca_components;
  o.threads = cfg.threads;
  return o;
}

std::vector<EncodingMatrix> encode_grid(const ResponseTensor& y, const CvPlan& plan, int n_layers,
                                        const LayerSource& layers, int threads) {
  require(n_layers > 0, ErrorCode::InvalidArgument, "no layers to encode");
  std::vector<MatrixD> per_layer(static_cast<std::size_t>(n_layers));
  parallel_for(static_cast<std::size_t>(n_layers), threads, [&](std::size_t k) {
    const ReducedLayer layer = layers(static_cast<int>(k));
    const CvDesign design(plan, layer);
    per_layer[k] = design.correlate(y);
  });

  std::vector<EncodingMatrix> out(y.n_electrodes());
  for (std::size_t e = 0; e < out.size(); ++e) {
    EncodingMatrix& m = out[e];
    m.values.resize(n_layers, y.n_lags());
    for (int k = 0; k < n_layers; ++k) m.values.row(k) = per_layer[static_cast<std::size_t>(k)].row(static_cast<Eigen::Index>(e));
    m.lags_ms = y.lags_ms;
    m.layers = one_based(n_layers);
  }
  return out;
}

ConditionEncoding encode_condition(const DatasetBundle& bundle, const EmbeddingSet& set, WordCondition condition,
                                   std::span<const std::size_t> electrodes, const EncodeOptions& opts) {
  set.validate(static_cast<Eigen::Index>(bundle.words.size()));
  ConditionEncoding out;
  out.word_rows = words_in(bundle.words, condition);
  if (electrodes.empty()) {
    for (std::size_t e = 0; e < bundle.electrodes.size(); ++e) out.electrode_indices.push_back(e);
  } else {
    out.electrode_indices.assign(electrodes.begin(), electrodes.end());
  }
  std::vector<double> onsets;
  onsets.reserve(out.word_rows.size());
  for (const std::size_t w : out.word_rows) onsets.push_back(bundle.words[w].onset);

  const ResponseTensor y = build_responses(bundle.signals, onsets, out.electrode_indices, opts.lags, opts.window_ms);
  const FoldAssignment folds = make_folds(out.word_rows.size(), opts.n_folds, opts.fold_scheme, opts.seed);
  const CvPlan plan(folds, y.valid);
  const int n_comp = static_cast<int>(std::min<Eigen::Index>(opts.n_components, set.dim()));
  const auto& rows = out.word_rows;
  auto source = [&](int k) {
    return reduce_layer(gather_rows(set.layers[static_cast<std::size_t>(k)], rows), folds, opts.pca_mode, n_comp);
  };
  out.electrodes = encode_grid(y, plan, set.layer_count(), source, opts.threads);
  for (std::size_t i = 0; i < out.electrodes.size(); ++i) {
    out.electrodes[i].tag = bundle.electrodes[out.electrode_indices[i]].id;
    out.electrodes[i].condition = condition;
  }
  return out;
}

// ---------------------------------------------------------------- summaries

EncodingMatrix average_roi(std::span<const EncodingMatrix> matrices, const std::string& tag) {
  require(!matrices.empty(), ErrorCode::EmptyRoi, "no electrodes in ROI " + tag);
  const EncodingMatrix& first = matrices.front();
  MatrixD sum = MatrixD::Zero(first.n_layers(), first.n_lags());
  Eigen::MatrixXi count = Eigen::MatrixXi::Zero(first.n_layers(), first.n_lags());
  for (const auto& m : matrices) {
    require(m.n_layers() == first.n_layers() && m.n_lags() == first.n_lags(), ErrorCode::ShapeMismatch,
            "encoding shapes differ within ROI " + tag);
    for (Eigen::Index i = 0; i < m.n_layers(); ++i) {
      for (Eigen::Index j = 0; j < m.n_lags(); ++j) {
        if (std::isnan(m.values(i, j))) continue;
        sum(i, j) += m.values(i, j);
        ++count(i, j);
      }
    }
  }
  EncodingMatrix out;
  out.values = MatrixD::Constant(first.n_layers(), first.n_lags(), kNaN);
  for (Eigen::Index i = 0; i < sum.rows(); ++i) {
    for (Eigen::Index j = 0; j < sum.cols(); ++j) {
      if (count(i, j) > 0) out.values(i, j) = sum(i, j) / count(i, j);
    }
  }
  out.lags_ms = first.lags_ms;
  out.layers = first.layers;
  out.tag = tag;
  out.condition = first.condition;
  out.contributors = count;
  return out;
}

ScaledEncoding scale_encodings(const EncodingMatrix& m) {
  ScaledEncoding out;
  out.matrix = m;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < m.n_layers(); ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m.n_lags(); ++j) {
      if (!std::isnan(m.values(i, j))) peak = std::max(peak, m.values(i, j));
    }
    if (peak > 0) {
      keep.push_back(i);
    } else {
      out.dropped_layers.push_back(m.layers.empty() ? static_cast<int>(i) + 1 : m.layers[static_cast<std::size_t>(i)]);
    }
  }
  require(!keep.empty(), ErrorCode::NoPositivePeak, "no layer of " + m.tag + " has a positive peak");
  out.matrix.values.resize(static_cast<Eigen::Index>(keep.size()), m.n_lags());
  out.matrix.layers.clear();
  if (m.contributors.size() > 0) out.matrix.contributors.resize(static_cast<Eigen::Index>(keep.size()), m.n_lags());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const Eigen::Index i = keep[r];
    const auto row = m.values.row(i);
    const double peak = row.array().isNaN().select(-std::numeric_limits<double>::infinity(), row.array()).maxCoeff();
    out.matrix.values.row(static_cast<Eigen::Index>(r)) = row / peak;
    out.matrix.layers.push_back(m.layers.empty() ? static_cast<int>(i) + 1 : m.layers[static_cast<std::size_t>(i)]);
    if (m.contributors.size() > 0) out.matrix.contributors.row(static_cast<Eigen::Index>(r)) = m.contributors.row(i);
  }
  return out;
}

std::vector<double> PeakLagTable::layer_indices() const {
  std::vector<double> out;
  for (const auto& e : rows) out.push_back(e.layer);
  return out;
}

std::vector<double> PeakLagTable::lags() const {
  std::vector<double> out;
  for (const auto& e : rows) out.push_back(e.peak_lag_ms);
  return out;
}

PeakLagTable peak_lags(const EncodingMatrix& m) {
  require(static_cast<Eigen::Index>(m.lags_ms.size()) == m.n_lags(), ErrorCode::ShapeMismatch,
          "lag axis does not match the matrix");
  PeakLagTable t;
  t.tag = m.tag;
  t.condition = m.condition;
  for (Eigen::Index i = 0; i < m.n_layers(); ++i) {
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < m.n_lags(); ++j) {
      const double v = m.values(i, j);
      if (std::isnan(v)) continue;
      if (best < 0 || v > m.values(i, best)) best = j;
    }
    const int layer = m.layers.empty() ? static_cast<int>(i) + 1 : m.layers[static_cast<std::size_t>(i)];
    require(best >= 0, ErrorCode::AllNaNRow, "layer " + std::to_string(layer) + " of " + m.tag + " is all NaN");
    t.rows.push_back({layer, m.lags_ms[static_cast<std::size_t>(best)], m.values(i, best)});
  }
  return t;
}

int max_layer(const EncodingMatrix& m) {
  int best_layer = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m.n_layers(); ++i) {
    for (Eigen::Index j = 0; j < m.n_lags(); ++j) {
      const double v = m.values(i, j);
      if (!std::isnan(v) && v > best) {
        best = v;
        best_layer = m.layers.empty() ? static_cast<int>(i) + 1 : m.layers[static_cast<std::size_t>(i)];
      }
    }
  }
  require(best_layer > 0, ErrorCode::AllNaNRow, "encoding " + m.tag + " has no finite cell");
  return best_layer;
}

}  // namespace lagcoder

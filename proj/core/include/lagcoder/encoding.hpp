#pragma once

#include "lagcoder/bundle.hpp"
#include "lagcoder/config.hpp"
#include "lagcoder/cv_engine.hpp"
#include "lagcoder/embedding_prep.hpp"
#include "lagcoder/types.hpp"

#include <functional>
#include <span>
#include <vector>

namespace lagcoder {

struct WindowedSignal {
  MatrixD values;                  // [n_electrodes x n_words]
  std::vector<std::uint8_t> valid; // per word
};

/// Half-width of the averaging window in samples: the window spans
/// 2 * half + 1 samples centred on round((onset + lag) * sample_rate).
Eigen::Index window_half_samples(double window_ms, double sample_rate);

/// Mean of each electrode over the window centred at onset + lag; words whose
/// window leaves the recording are masked out.
WindowedSignal window_signal(const SignalRecording& rec, std::span<const double> onsets, int lag_ms,
                             double window_ms, std::span<const std::size_t> electrodes = {});

/// window_signal over the whole lag grid. An empty electrode list means all.
ResponseTensor build_responses(const SignalRecording& rec, std::span<const double> onsets,
                               std::span<const std::size_t> electrodes, const LagGrid& lags, double window_ms);
ResponseTensor build_responses(const MatrixD& signals, double sample_rate, std::span<const double> onsets,
                               const LagGrid& lags, double window_ms);

struct OlsFit {
  VectorD weights;
  double intercept = 0.0;
  bool degenerate = false;  // all-zero design: intercept-only model

  VectorD predict(const MatrixD& x) const;
};

/// Least squares with intercept via complete orthogonal decomposition
/// (minimum-norm under rank deficiency). Requires n > p + 1.
OlsFit ols_fit(const MatrixD& x, const VectorD& y);

/// Reference cross-validation route: one ols_fit per fold, predictions
/// concatenated, a single Pearson r. NaN when predictions or y are constant.
double cv_encode(const MatrixD& x, const VectorD& y, const FoldAssignment& folds);
double cv_encode(const ReducedLayer& x, const VectorD& y, const FoldAssignment& folds);

struct EncodeOptions {
  LagGrid lags;
  double window_ms = 200.0;
  int n_folds = 10;
  FoldScheme fold_scheme = FoldScheme::Contiguous;
  std::uint64_t seed = 0;
  PcaMode pca_mode = PcaMode::Full;
  int n_components = 50;
  int threads = 0;
};

EncodeOptions encode_options(const Config& cfg);

struct ConditionEncoding {
  std::vector<EncodingMatrix> electrodes;     // one per requested electrode
  std::vector<std::size_t> electrode_indices; // bundle electrode rows
  std::vector<std::size_t> word_rows;         // bundle word rows used
};

/// Layer provider: reduced design for 0-based layer k over the plan's words.
using LayerSource = std::function<ReducedLayer(int layer)>;

/// Encodes every layer against fixed responses; rows are layers in order.
std::vector<EncodingMatrix> encode_grid(const ResponseTensor& y, const CvPlan& plan, int n_layers,
                                        const LayerSource& layers, int threads);

/// Full per-condition pipeline: select words, build folds, PCA per layer,
/// window responses and fit the grid for the requested electrodes.
ConditionEncoding encode_condition(const DatasetBundle& bundle, const EmbeddingSet& set, WordCondition condition,
                                   std::span<const std::size_t> electrodes, const EncodeOptions& opts);

/// Cell-wise mean over electrodes ignoring NaN cells; contributors records the
/// count per cell. Throws EmptyRoi for an empty list.
EncodingMatrix average_roi(std::span<const EncodingMatrix> matrices, const std::string& tag);

struct ScaledEncoding {
  EncodingMatrix matrix;
  std::vector<int> dropped_layers;  // 1-based layers whose maximum was <= 0
};

/// Divides each layer row by its maximum; rows without a positive maximum are dropped.
ScaledEncoding scale_encodings(const EncodingMatrix& m);

struct PeakLagTable {
  struct Entry {
    int layer = 0;  // 1-based
    int peak_lag_ms = 0;
    double peak_r = 0.0;
  };
  std::string tag;
  WordCondition condition = WordCondition::All;
  std::vector<Entry> rows;

  std::vector<double> layer_indices() const;
  std::vector<double> lags() const;
};

/// Per layer, the lag of the maximum; ties go to the earliest lag.
PeakLagTable peak_lags(const EncodingMatrix& m);

/// 1-based layer with the highest peak anywhere in the (unscaled) matrix.
int max_layer(const EncodingMatrix& m);

}  // namespace lagcoder

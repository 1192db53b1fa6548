#pragma once

#include "lagcoder/bundle.hpp"
#include "lagcoder/config.hpp"
#include "lagcoder/encoding.hpp"
#include "lagcoder/stats.hpp"

#include <vector>

namespace lagcoder {

struct ControlOptions {
  EncodeOptions encode;
  WordCondition condition = WordCondition::All;
  Roi roi = Roi::IFG;
  bool selected_only = false;
  int n_iter = 200;
  std::size_t pool_size = 1000;
  int lag_layer_n_perm = 10000;
  Sidedness sided = Sidedness::OneSided;
};

ControlOptions control_options(const Config& cfg);

/// Electrodes the controls run on: the ROI's electrodes, restricted to the
/// selected ones when requested. Throws EmptyRoi.
std::vector<std::size_t> control_electrodes(const DatasetBundle& bundle, Roi roi, bool selected_only);

struct ControlReport {
  double observed_r = 0.0;
  std::vector<double> null_r;  // one per iteration; NaN when every sampled lag was equal
  double p = 1.0;              // (1 + #{null >= observed}) / (1 + n_iter)
  int n_iter = 0;
  std::size_t pool_size = 0;
  std::vector<double> observed_peak_lags;
};

/// Pseudo-layer control: the lag-layer r of the real layers against the r of
/// sets whose intermediate layers are sorted random draws from the linear
/// interpolation pool between the first and last layer. Each pseudo-layer is
/// reduced and encoded on its own, so its peak lag depends only on its pool
/// index; the peaks are computed once per drawn index and reused across
/// iterations.
ControlReport run_interpolation_control(const DatasetBundle& bundle, const EmbeddingSet& set,
                                        const ControlOptions& opts);

struct ProjectionReport {
  int max_layer = 0;  // 1-based, from the unprojected ROI average
  EncodingMatrix roi_before;
  EncodingMatrix roi_after;
  double max_layer_peak_after = 0.0;  // NaN when the whole row is undefined
  double null_ceiling = 0.0;          // 95th percentile of a phase-randomised ROI grid
  LagLayerResult lag_layer_after;     // over the remaining layers
  std::vector<std::size_t> zero_norm_words;
};

/// Removes the max layer's direction from every layer word by word and
/// re-encodes.
ProjectionReport run_projection_control(const DatasetBundle& bundle, const EmbeddingSet& set,
                                        const ControlOptions& opts);

/// 95th percentile over finite cells of the ROI-average grid obtained after
/// phase-randomising every electrode.
double null_ceiling(const DatasetBundle& bundle, const EmbeddingSet& set, const std::vector<std::size_t>& electrodes,
                    WordCondition condition, const EncodeOptions& opts);

/// Percentile with linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double q);

}  // namespace lagcoder

#pragma once

#include "lagcoder/bundle.hpp"
#include "lagcoder/config.hpp"
#include "lagcoder/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lagcoder {

struct SelectionOptions {
  int n_perm = 5000;
  double q_threshold = 0.01;
  LagGrid lags;
  double window_ms = 200.0;
  int n_folds = 10;
  FoldScheme fold_scheme = FoldScheme::Contiguous;
  int n_components = 50;  // capped at the static dimension
  std::uint64_t seed = 0;
  int threads = 0;
};

SelectionOptions selection_options(const Config& cfg);

struct ElectrodeSelection {
  std::size_t index = 0;  // bundle electrode row
  std::string id;
  double observed_max_r = 0.0;
  double p = 1.0;
  double q = 1.0;
  bool selected = false;
};

struct SelectionReport {
  std::vector<ElectrodeSelection> electrodes;
  std::vector<double> null_max;  // one max-over-electrodes value per permutation
  double null_mean = 0.0;
  double null_p95 = 0.0;
  int n_perm = 0;
  double q_threshold = 0.0;
  std::vector<std::string> warnings;

  std::vector<std::size_t> selected_indices() const;
};

/// Static-embedding encoding per electrode against a max-statistic null built
/// from phase-randomised signals; BH across electrodes, selected iff q < threshold.
SelectionReport select_electrodes(const DatasetBundle& bundle, const EmbeddingSet& static_set,
                                  const SelectionOptions& opts);

/// Copy of the bundle with ElectrodeMeta::selected set from the report.
DatasetBundle apply_selection(const DatasetBundle& bundle, const SelectionReport& report);

}  // namespace lagcoder

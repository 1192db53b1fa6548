#pragma once

#include "lagcoder/config.hpp"
#include "lagcoder/encoding.hpp"
#include "lagcoder/rng.hpp"
#include "lagcoder/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lagcoder {

/// Product-moment correlation; NaN when n < 3 or either input is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Fractional ranks (1-based), ties receive their average rank.
std::vector<double> fractional_ranks(std::span<const double> x);

double spearman(std::span<const double> x, std::span<const double> y);

/// Permutation p for corr(layer, lag) with lags fixed and layer indices
/// shuffled: (1 + #{r_perm >= r_obs}) / (1 + n_perm). Two-sided compares |r|.
/// NaN when the observed r is undefined.
double permutation_test_layers(std::span<const double> layers, std::span<const double> lags, int n_perm,
                               std::uint64_t seed, Sidedness sided = Sidedness::OneSided, int threads = 0);

struct LagLayerResult {
  double pearson_r = 0.0;
  double spearman_r = 0.0;
  double permutation_p = 0.0;
  int n_perm = 0;
  std::vector<double> peak_lags;
  std::vector<double> layer_indices;
  bool degenerate = false;  // all lags equal: r and p undefined
};

LagLayerResult lag_layer_correlation(const PeakLagTable& peaks, int n_perm, std::uint64_t seed,
                                     Sidedness sided = Sidedness::OneSided, int threads = 0);

/// Two-tailed percentile bootstrap p that the mean of `values` differs from 0:
/// min(1, 2 (1 + min(#means <= 0, #means >= 0)) / (1 + n_boot)).
double bootstrap_mean_p(std::span<const double> values, int n_boot, std::uint64_t seed, std::uint64_t stream = 0);

/// Per column (layer) of an [n_electrodes x n_layers] matrix; NaN cells are
/// ignored. Throws TooFewElectrodes below two electrodes.
VectorD bootstrap_roi_peaks(const MatrixD& per_electrode, int n_boot, std::uint64_t seed, int threads = 0);

/// Surrogate with the same Fourier magnitudes and uniformly random phases.
std::vector<double> phase_randomize(std::span<const double> signal, Rng& rng);

/// Benjamini-Hochberg adjusted values, in input order.
std::vector<double> fdr_bh(std::span<const double> p);

struct PairedTTest {
  VectorD mean_difference;  // per layer
  VectorD t;
  VectorD p;
  VectorD q;
  Eigen::VectorXi n_pairs;
};

/// Per-layer two-sided paired t-test over electrodes (rows) on pred - unpred,
/// then BH across layers. NaN cells drop that pair. Throws TooFewPairs (< 3).
PairedTTest paired_ttest_layers(const MatrixD& pred, const MatrixD& unpred);

struct LeveneResult {
  double f = 0.0;
  double p = 1.0;
  int df_between = 0;
  int df_within = 0;
};

/// Classic Levene test (absolute deviations from group means).
LeveneResult levene_test(const std::vector<std::vector<double>>& groups);

struct KsResult {
  double d = 0.0;
  double p = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against U(0, 1), asymptotic p.
KsResult ks_uniform(std::span<const double> values);

}  // namespace lagcoder

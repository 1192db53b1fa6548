#pragma once

#include "lagcoder/bundle.hpp"
#include "lagcoder/config.hpp"
#include "lagcoder/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace lagcoder {

struct DespikeResult {
  std::vector<double> signal;
  std::vector<std::size_t> spikes;  // indices that were replaced
};

/// Replaces samples outside median +/- multiplier * IQR by local cubic
/// interpolation through the two nearest clean samples on each side. A zero
/// IQR disables despiking for the series.
DespikeResult despike(std::span<const double> signal, double multiplier);

/// Subtracts the per-sample mean across electrodes. signals: [n_electrodes x n_samples].
MatrixD common_average_reference(const MatrixD& signals);

/// Wavelet centre frequencies kept after line-noise exclusion (log-spaced over the band).
std::vector<double> wavelet_frequencies(const PreprocessConfig& cfg);

/// Broadband high-gamma power: complex Morlet power at each retained frequency,
/// optionally mean-normalised per frequency, averaged across frequencies.
std::vector<double> highgamma_power(std::span<const double> signal, double sample_rate,
                                    const PreprocessConfig& cfg);

/// Same-length convolution with a unit-area Hamming kernel; near the edges the
/// kernel is renormalised over the part that overlaps the series.
std::vector<double> hamming_smooth(std::span<const double> series, double kernel_ms, double sample_rate);

struct PreprocessResult {
  SignalRecording recording;
  std::string provenance;
  std::vector<std::size_t> spikes_per_electrode;
};

/// despike -> CAR -> high-gamma power -> smoothing, restricted to cfg.stages.
PreprocessResult preprocess_recording(const SignalRecording& rec, const PreprocessConfig& cfg, int threads = 0);

/// Copy of the bundle with preprocessed signals and a provenance entry appended.
DatasetBundle preprocess_bundle(const DatasetBundle& bundle, const PreprocessConfig& cfg, int threads = 0);

}  // namespace lagcoder
